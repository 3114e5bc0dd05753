#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sacrf/metrics.hpp"
#include "sacrf/tensor.hpp"

namespace sacrf {

/**
 * Procedural RGB-D scene. A receding ground plane plus a few fronto-parallel
 * rectangles, each with its own albedo, rendered through exponential haze:
 *
 *   rgb = albedo * t + haze * (1 - t),   t = exp(-depth / haze_range)
 *
 * Depth is taken analytically from the nearest primitive at each pixel.
 */
struct SyntheticScene {
  Tensor rgb;  // 3 x H x W, values in [0, 1]
  DepthMap depth;
};

struct DatasetSpec {
  std::size_t count = 1;
  std::size_t height = 64;
  std::size_t width = 64;
};

/// Deterministic per seed; scene k depends only on (seed, k).
std::vector<SyntheticScene> generate_dataset(std::uint64_t seed,
                                             const DatasetSpec& spec);
SyntheticScene generate_scene(std::uint64_t seed, std::size_t index,
                              std::size_t height, std::size_t width);

/// Writes rgb_<k>.ten / depth_<k>.ten and a manifest.txt.
void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SyntheticScene>& scenes,
                  std::uint64_t seed);
std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir);

}  // namespace sacrf
