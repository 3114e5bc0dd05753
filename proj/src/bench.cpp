#include "sacrf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>

#include "sacrf/random.hpp"

namespace sacrf {

Tensor gaussian_blur5(const Tensor& map) {
  static constexpr double taps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const std::size_t c_n = map.dim(0), h = map.dim(1), w = map.dim(2);
  Tensor tmp(map.shape()), out(map.shape());
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -2; t <= 2; ++t) {
          const long xx = static_cast<long>(x) + t;
          if (xx >= 0 && xx < static_cast<long>(w)) acc += taps[t + 2] * map.at(c, y, xx);
        }
        tmp.at(c, y, x) = acc;
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -2; t <= 2; ++t) {
          const long yy = static_cast<long>(y) + t;
          if (yy >= 0 && yy < static_cast<long>(h)) acc += taps[t + 2] * tmp.at(c, yy, x);
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

Tensor gaussian_message_pass(const MultiScaleFeatures& x, int iterations) {
  const Tensor gate = Tensor::full({1, x.height(), x.width()}, kInitialAttention);
  Tensor y_ref = x.reference();
  for (int it = 0; it < iterations; ++it) {
    Tensor next = x.reference();
    for (std::size_t s = 0; s + 1 < x.num_scales(); ++s) {
      next = add(next, mul(gaussian_blur5(x[s]), gate));
    }
    y_ref = std::move(next);
  }
  return y_ref;
}

void BenchConfig::validate() const {
  if (scales < 2) throw std::invalid_argument("bench: scales must be >= 2");
  if (channels < 1) throw std::invalid_argument("bench: channels must be >= 1");
  if (iterations < 1) throw std::invalid_argument("bench: iterations must be >= 1");
  if (repeats < 1) throw std::invalid_argument("bench: repeats must be >= 1");
  if (threads < 1) throw std::invalid_argument("bench: threads must be >= 1");
  for (auto s : sizes) {
    if (s == 0) throw std::invalid_argument("bench: sizes must be positive");
  }
}

namespace {

template <class F>
double median_ms(int repeats, int iterations, F&& fn) {
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / iterations);
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& config) {
  config.validate();
  const unsigned saved = num_threads();
  set_num_threads(config.threads);
  std::vector<BenchRow> rows;
  try {
    for (std::size_t size : config.sizes) {
      std::mt19937_64 rng(mix_seed(config.seed, size));
      auto random = [&](Shape shape, double scale) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = uniform(rng, -scale, scale);
        return t;
      };
      std::vector<Tensor> maps;
      for (std::size_t s = 0; s < config.scales; ++s) {
        maps.push_back(random({config.channels, size, size}, 1.0));
      }
      const MultiScaleFeatures x(std::move(maps));
      KernelBank kb;
      for (std::size_t s = 0; s + 1 < config.scales; ++s) {
        kb.K.push_back(random({config.channels, config.channels, 3, 3}, 0.05));
        kb.beta.push_back(random({1, 1, 3, 3}, 0.05));
      }
      InferenceConfig ic;
      ic.iterations = config.iterations;

      BenchRow row{config.threads, size, config.scales, config.channels,
                   config.iterations, config.repeats, "meanfield", 0.0};
      double sink = 0.0;
      row.median_ms = median_ms(config.repeats, config.iterations, [&] {
        sink += run_inference(x, kb, ic).y.reference()[0];
      });
      rows.push_back(row);
      row.method = "gaussian5";
      row.median_ms = median_ms(config.repeats, config.iterations, [&] {
        sink += gaussian_message_pass(x, config.iterations)[0];
      });
      rows.push_back(row);
      if (!std::isfinite(sink)) throw std::runtime_error("bench: non-finite result");
    }
  } catch (...) {
    set_num_threads(saved);
    throw;
  }
  set_num_threads(saved);
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "threads,size,scales,channels,iterations,repeats,method,median_ms_per_iteration\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%u,%zux%zu,%zu,%zu,%d,%d,%s,%.6f\n", r.threads, r.size,
                  r.size, r.scales, r.channels, r.iterations, r.repeats, r.method.c_str(),
                  r.median_ms);
    os << buf;
  }
}

}  // namespace sacrf
