#include "sacrf/crf.hpp"

#include <string>

namespace sacrf {

MultiScaleFeatures::MultiScaleFeatures(std::vector<Tensor> scales)
    : scales_(std::move(scales)) {
  if (scales_.size() < 2) {
    throw ShapeError("multi-scale features need at least 2 scales, got " +
                     std::to_string(scales_.size()));
  }
  const Shape& ref = scales_.front().shape();
  if (ref.size() != 3) {
    throw ShapeError("feature maps must be C x H x W, got " + shape_str(ref));
  }
  for (std::size_t s = 1; s < scales_.size(); ++s) {
    if (scales_[s].shape() != ref) {
      throw ShapeError("scale " + std::to_string(s) + " has shape " +
                       shape_str(scales_[s].shape()) + ", expected " +
                       shape_str(ref));
    }
  }
}

KernelBank KernelBank::zeros(std::size_t num_scales, std::size_t channels) {
  KernelBank kb;
  for (std::size_t s = 0; s + 1 < num_scales; ++s) {
    kb.K.push_back(Tensor::zeros({channels, channels, 3, 3}));
    kb.beta.push_back(Tensor::zeros({1, 1, 3, 3}));
  }
  return kb;
}

void check_kernels(const KernelBank& kernels, std::size_t num_scales,
                   std::size_t channels) {
  const std::size_t n = num_scales - 1;
  if (kernels.K.size() != n || kernels.beta.size() != n) {
    throw ShapeError("kernel bank has " + std::to_string(kernels.K.size()) +
                     " message and " + std::to_string(kernels.beta.size()) +
                     " smoothing kernels, expected " + std::to_string(n));
  }
  const Shape k_shape{channels, channels, 3, 3};
  const Shape b_shape{1, 1, 3, 3};
  for (std::size_t s = 0; s < n; ++s) {
    if (kernels.K[s].shape() != k_shape) {
      throw ShapeError("K[" + std::to_string(s) + "] has shape " +
                       shape_str(kernels.K[s].shape()) + ", expected " +
                       shape_str(k_shape));
    }
    if (kernels.beta[s].shape() != b_shape) {
      throw ShapeError("beta[" + std::to_string(s) + "] has shape " +
                       shape_str(kernels.beta[s].shape()) + ", expected " +
                       shape_str(b_shape));
    }
  }
}

void check_attention(const AttentionMaps& a, const MultiScaleFeatures& x) {
  if (a.maps.size() + 1 != x.num_scales()) {
    throw ShapeError("expected " + std::to_string(x.num_scales() - 1) +
                     " attention maps, got " + std::to_string(a.maps.size()));
  }
  const Shape want{1, x.height(), x.width()};
  for (const auto& m : a.maps) {
    if (m.shape() != want) {
      throw ShapeError("attention map " + shape_str(m.shape()) +
                       ", expected " + shape_str(want));
    }
  }
}

void check_latent(const LatentFeatures& y, const MultiScaleFeatures& x) {
  if (y.scales.size() != x.num_scales()) {
    throw ShapeError("latent features have " + std::to_string(y.scales.size()) +
                     " scales, observations have " +
                     std::to_string(x.num_scales()));
  }
  for (const auto& m : y.scales) {
    if (m.shape() != x.map_shape()) {
      throw ShapeError("latent map " + shape_str(m.shape()) + ", expected " +
                       shape_str(x.map_shape()));
    }
  }
}

AttentionMaps constant_attention(const MultiScaleFeatures& x, double value) {
  AttentionMaps a;
  for (std::size_t s = 0; s + 1 < x.num_scales(); ++s) {
    a.maps.push_back(Tensor::full({1, x.height(), x.width()}, value));
  }
  return a;
}

double unary_energy(const LatentFeatures& y, const MultiScaleFeatures& x) {
  check_latent(y, x);
  double e = 0.0;
  for (std::size_t s = 0; s < x.num_scales(); ++s) {
    const Tensor& ys = y.scales[s];
    const Tensor& xs = x[s];
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double d = ys[i] - xs[i];
      e -= 0.5 * d * d;
    }
  }
  return e;
}

double pairwise_energy(const LatentFeatures& y, const AttentionMaps& a,
                       const KernelBank& kernels) {
  if (y.scales.size() < 2) throw ShapeError("pairwise_energy: need >= 2 scales");
  const MultiScaleFeatures shapes(y.scales);
  check_attention(a, shapes);
  check_kernels(kernels, shapes.num_scales(), shapes.channels());
  double e = 0.0;
  for (std::size_t s = 0; s + 1 < y.scales.size(); ++s) {
    const Tensor msg = conv2d(y.reference(), kernels.K[s]);
    const Tensor agreement = channel_sum(mul(y.scales[s], msg));
    const Tensor& as = a.maps[s];
    for (std::size_t i = 0; i < as.size(); ++i) e += as[i] * agreement[i];
  }
  return e;
}

double attention_smoothing_energy(const AttentionMaps& a,
                                  const KernelBank& kernels) {
  if (kernels.beta.size() != a.maps.size()) {
    throw ShapeError("attention_smoothing_energy: " +
                     std::to_string(a.maps.size()) + " maps vs " +
                     std::to_string(kernels.beta.size()) + " kernels");
  }
  double e = 0.0;
  for (std::size_t s = 0; s < a.maps.size(); ++s) {
    const Tensor smoothed = conv2d(a.maps[s], kernels.beta[s]);
    for (std::size_t i = 0; i < smoothed.size(); ++i) {
      e += a.maps[s][i] * smoothed[i];
    }
  }
  return e;
}

EnergyBreakdown total_energy(const LatentFeatures& y, const AttentionMaps& a,
                             const MultiScaleFeatures& x,
                             const KernelBank& kernels) {
  check_kernels(kernels, x.num_scales(), x.channels());
  EnergyBreakdown b;
  b.unary = unary_energy(y, x);
  b.pairwise = pairwise_energy(y, a, kernels);
  b.attention_smoothing = attention_smoothing_energy(a, kernels);
  b.total = b.unary + b.pairwise + b.attention_smoothing;
  return b;
}

}  // namespace sacrf
