#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sacrf/crf.hpp"
#include "sacrf/meanfield.hpp"

namespace sacrf {

/**
 * Message passing by a fixed separable 5-tap Gaussian in place of the learned
 * 3x3 kernels: each iteration blurs every intermediate scale channel by
 * channel, gates it and adds it onto x_S. Used only as a timing baseline.
 */
Tensor gaussian_message_pass(const MultiScaleFeatures& x, int iterations);

/// Separable [1 4 6 4 1] / 16 blur of every channel, zero padded.
Tensor gaussian_blur5(const Tensor& map);

struct BenchConfig {
  std::vector<std::size_t> sizes{32, 64, 128, 256};  // square H = W
  std::size_t scales = 3;
  std::size_t channels = 8;
  int iterations = 3;
  int repeats = 5;
  unsigned threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  unsigned threads = 1;
  std::size_t size = 0;
  std::size_t scales = 0;
  std::size_t channels = 0;
  int iterations = 0;
  int repeats = 0;
  std::string method;         // "meanfield" or "gaussian5"
  double median_ms = 0.0;     // per iteration, median over repeats
};

std::vector<BenchRow> run_bench(const BenchConfig& config);

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace sacrf
