#pragma once

#include <cstddef>
#include <vector>

#include "sacrf/tensor.hpp"

namespace sacrf {

/**
 * Observed feature maps X_1..X_S, all C x H x W. The last entry is the
 * reference scale that receives messages from the intermediate scales.
 */
class MultiScaleFeatures {
 public:
  MultiScaleFeatures() = default;
  /// Throws ShapeError unless S >= 2 and all scales share C, H, W.
  explicit MultiScaleFeatures(std::vector<Tensor> scales);

  const std::vector<Tensor>& scales() const { return scales_; }
  const Tensor& operator[](std::size_t s) const { return scales_.at(s); }
  const Tensor& reference() const { return scales_.back(); }
  std::size_t num_scales() const { return scales_.size(); }
  std::size_t channels() const { return scales_.front().dim(0); }
  std::size_t height() const { return scales_.front().dim(1); }
  std::size_t width() const { return scales_.front().dim(2); }
  const Shape& map_shape() const { return scales_.front().shape(); }

 private:
  std::vector<Tensor> scales_;
};

/// Mean-field expectations of the latent features, one map per scale.
struct LatentFeatures {
  std::vector<Tensor> scales;
  const Tensor& reference() const { return scales.back(); }
};

/// Expected attention per intermediate scale, each 1 x H x W.
struct AttentionMaps {
  std::vector<Tensor> maps;
};

/**
 * Learnable CRF parameters: one C x C x 3 x 3 message kernel and one
 * 1 x 1 x 3 x 3 attention-smoothing kernel per intermediate scale.
 */
struct KernelBank {
  std::vector<Tensor> K;
  std::vector<Tensor> beta;

  static KernelBank zeros(std::size_t num_scales, std::size_t channels);
  std::size_t num_intermediate() const { return K.size(); }
};

struct EnergyBreakdown {
  double unary = 0.0;
  double pairwise = 0.0;
  double attention_smoothing = 0.0;
  double total = 0.0;
};

/// Throws ShapeError if the bank does not fit S scales of C channels.
void check_kernels(const KernelBank& kernels, std::size_t num_scales,
                   std::size_t channels);
/// Throws ShapeError unless there are S-1 maps of 1 x H x W.
void check_attention(const AttentionMaps& a, const MultiScaleFeatures& x);
void check_latent(const LatentFeatures& y, const MultiScaleFeatures& x);

/// 1 x H x W maps filled with `value`, one per intermediate scale.
AttentionMaps constant_attention(const MultiScaleFeatures& x, double value);

// Energy terms. The pixel-pair support is the 3x3 footprint of the kernels.

/// -sum_s sum_i 1/2 |y_s^i - x_s^i|^2
double unary_energy(const LatentFeatures& y, const MultiScaleFeatures& x);

/// sum_{s<S} sum_i a_s^i <y_s^i, (K_s * y_S)(i)>
double pairwise_energy(const LatentFeatures& y, const AttentionMaps& a,
                       const KernelBank& kernels);

/// sum_{s<S} sum_i a_s^i (beta_s * a_s)(i)
double attention_smoothing_energy(const AttentionMaps& a,
                                  const KernelBank& kernels);

EnergyBreakdown total_energy(const LatentFeatures& y, const AttentionMaps& a,
                             const MultiScaleFeatures& x,
                             const KernelBank& kernels);

}  // namespace sacrf
