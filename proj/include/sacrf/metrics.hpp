#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>

#include "sacrf/tensor.hpp"

namespace sacrf {

/// A depth value that is zero, negative or non-finite where a positive one
/// is required.
class NonPositiveDepth : public std::invalid_argument {
 public:
  NonPositiveDepth(const std::string& which, std::size_t index, double value);
  std::size_t index() const { return index_; }
  double value() const { return value_; }

 private:
  std::size_t index_;
  double value_;
};

/// Positive single-channel depth map, 1 x H x W, in meters.
class DepthMap {
 public:
  DepthMap() = default;
  /// Throws ShapeError on a bad shape and NonPositiveDepth on bad values.
  explicit DepthMap(Tensor values);

  const Tensor& values() const { return values_; }
  std::size_t height() const { return values_.dim(1); }
  std::size_t width() const { return values_.dim(2); }

 private:
  Tensor values_;
};

/// Error and accuracy measures over Q pixels.
struct MetricsReport {
  double rel = 0.0;    // mean |d_hat - d| / d
  double rms = 0.0;    // sqrt(mean (d_hat - d)^2)
  double log10 = 0.0;  // mean |log10 d_hat - log10 d|
  double delta1 = 0.0; // fraction with max(d/d_hat, d_hat/d) < 1.25
  double delta2 = 0.0; // ... < 1.25^2
  double delta3 = 0.0; // ... < 1.25^3
};

/// Throws ShapeError on shape mismatch, NonPositiveDepth on values <= 0.
MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt);
/// Pools all pixels of several prediction/ground-truth pairs.
MetricsReport compute_metrics(std::span<const Tensor> preds,
                              std::span<const Tensor> gts);

/// sum_i (pred_i - gt_i)^2 over all pixels of one image.
double square_loss(const Tensor& pred, const Tensor& gt);

/// Two-row aligned table, four decimals.
void print_metrics_table(std::ostream& os, const MetricsReport& m);
void write_metrics_csv(std::ostream& os, const MetricsReport& m);

}  // namespace sacrf
