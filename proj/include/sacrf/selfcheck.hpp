#pragma once

#include <cstddef>
#include <cstdint>

#include "sacrf/grad_check.hpp"
#include "sacrf/model.hpp"

namespace sacrf {

struct CrfCheckSpec {
  std::uint64_t seed = 0;
  std::size_t scales = 2;
  std::size_t channels = 2;
  std::size_t height = 4;
  std::size_t width = 4;
  int iterations = 2;
  bool update_intermediate_scales = false;
  double kernel_scale = 0.3;
  double h = 1e-5;
  double threshold = 1e-4;
};

/**
 * Random X, K, beta and target on a tape; loss = ||y_S - target||^2 after
 * unrolled inference. Every leaf is checked against central differences.
 */
GradCheckReport crf_gradient_check(const CrfCheckSpec& spec);

struct ModelCheckSpec {
  std::uint64_t seed = 0;
  ToyConfig model;
  std::size_t height = 8;
  std::size_t width = 8;
  double h = 1e-5;
  double threshold = 1e-4;

  ModelCheckSpec();
};

/// Square loss of the whole toy model on one synthetic scene; checks every
/// encoder, CRF, fusion and decoder parameter plus the image and target.
GradCheckReport model_gradient_check(const ModelCheckSpec& spec);

}  // namespace sacrf
