#include "sacrf/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "sacrf/io.hpp"
#include "sacrf/random.hpp"

namespace sacrf {

namespace {

constexpr double kHazeRange = 6.0;  // meters
constexpr std::array<double, 3> kHaze{0.80, 0.85, 0.92};
constexpr double kPlaneNear = 2.0;  // depth at the bottom row
constexpr double kPlaneFar = 9.0;   // depth at the top row

struct Rect {
  double y0, y1, x0, x1;
  double depth;
  std::array<double, 3> albedo;
  std::array<double, 3> gradient;  // albedo change across the rectangle
};

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, std::size_t index,
                              std::size_t height, std::size_t width) {
  std::mt19937_64 rng(mix_seed(seed, index));
  const double h = static_cast<double>(height), w = static_cast<double>(width);

  std::array<double, 3> ground_albedo, ground_grad;
  for (int c = 0; c < 3; ++c) {
    ground_albedo[c] = uniform(rng, 0.1, 0.6);
    ground_grad[c] = uniform(rng, -0.15, 0.15);
  }
  const double horizon_tilt = uniform(rng, -0.2, 0.2);

  const int n_rects = 1 + static_cast<int>(rng() % 3);
  std::vector<Rect> rects;
  for (int r = 0; r < n_rects; ++r) {
    Rect rc{};
    const double rh = uniform(rng, 0.2, 0.55) * h;
    const double rw = uniform(rng, 0.2, 0.55) * w;
    rc.y0 = uniform(rng, 0.0, h - rh);
    rc.x0 = uniform(rng, 0.0, w - rw);
    rc.y1 = rc.y0 + rh;
    rc.x1 = rc.x0 + rw;
    rc.depth = uniform(rng, 1.2, 6.0);
    for (int c = 0; c < 3; ++c) {
      rc.albedo[c] = uniform(rng, 0.0, 1.0);
      rc.gradient[c] = uniform(rng, -0.2, 0.2);
    }
    rects.push_back(rc);
  }

  Tensor rgb({3, height, width});
  Tensor depth({1, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double py = (static_cast<double>(y) + 0.5) / h;
      const double px = (static_cast<double>(x) + 0.5) / w;
      // ground plane: far at the top, near at the bottom, slightly tilted
      const double v = std::clamp(py + horizon_tilt * (px - 0.5), 0.0, 1.0);
      double d = kPlaneFar * kPlaneNear / (kPlaneNear + (kPlaneFar - kPlaneNear) * v);
      std::array<double, 3> albedo;
      for (int c = 0; c < 3; ++c) albedo[c] = ground_albedo[c] + ground_grad[c] * px;

      const double cy = static_cast<double>(y) + 0.5, cx = static_cast<double>(x) + 0.5;
      for (const auto& rc : rects) {
        if (cy < rc.y0 || cy >= rc.y1 || cx < rc.x0 || cx >= rc.x1) continue;
        if (rc.depth >= d) continue;
        d = rc.depth;
        const double u = (cx - rc.x0) / (rc.x1 - rc.x0);
        for (int c = 0; c < 3; ++c) albedo[c] = rc.albedo[c] + rc.gradient[c] * u;
      }
      const double t = std::exp(-d / kHazeRange);
      for (int c = 0; c < 3; ++c) {
        rgb.at(c, y, x) = std::clamp(albedo[c], 0.0, 1.0) * t + kHaze[c] * (1.0 - t);
      }
      depth.at(0, y, x) = d;
    }
  }
  return {std::move(rgb), DepthMap(std::move(depth))};
}

std::vector<SyntheticScene> generate_dataset(std::uint64_t seed,
                                             const DatasetSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("dataset count must be >= 1");
  if (spec.height == 0 || spec.width == 0) {
    throw std::invalid_argument("dataset scenes must be non-empty");
  }
  std::vector<SyntheticScene> out;
  out.reserve(spec.count);
  for (std::size_t k = 0; k < spec.count; ++k) {
    out.push_back(generate_scene(seed, k, spec.height, spec.width));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SyntheticScene>& scenes,
                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    save_ten(dir / ("rgb_" + std::to_string(k) + ".ten"), scenes[k].rgb);
    save_ten(dir / ("depth_" + std::to_string(k) + ".ten"), scenes[k].depth.values());
  }
  KeyValues kv{{"kind", "dataset"},
               {"seed", std::to_string(seed)},
               {"count", std::to_string(scenes.size())}};
  if (!scenes.empty()) {
    kv["rgb_shape"] = shape_str(scenes[0].rgb.shape());
    kv["depth_shape"] = shape_str(scenes[0].depth.values().shape());
  }
  std::ofstream os(dir / "manifest.txt");
  write_key_values(os, kv);
}

std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir) {
  const KeyValues kv = load_key_values(dir / "manifest.txt");
  const auto it = kv.find("count");
  if (it == kv.end()) throw FormatError(dir.string() + ": manifest lacks count");
  const std::size_t count = std::stoul(it->second);
  std::vector<SyntheticScene> out;
  for (std::size_t k = 0; k < count; ++k) {
    Tensor rgb = load_ten(dir / ("rgb_" + std::to_string(k) + ".ten"));
    Tensor depth = load_ten(dir / ("depth_" + std::to_string(k) + ".ten"));
    if (rgb.rank() != 3 || rgb.dim(0) != 3 || depth.rank() != 3 ||
        rgb.dim(1) != depth.dim(1) || rgb.dim(2) != depth.dim(2)) {
      throw ShapeError("scene " + std::to_string(k) + ": rgb " +
                       shape_str(rgb.shape()) + " vs depth " +
                       shape_str(depth.shape()));
    }
    out.push_back({std::move(rgb), DepthMap(std::move(depth))});
  }
  return out;
}

}  // namespace sacrf
