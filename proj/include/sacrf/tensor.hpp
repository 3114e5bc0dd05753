#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sacrf {

/// Thrown when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/**
 * Dense row-major array of doubles. The last dimension is contiguous.
 *
 * Maps are stored as C x H x W; convolution kernels as C_out x C_in x kH x kW.
 * A rank-0 tensor holds a single scalar.
 */
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 3-D accessors for C x H x W maps.
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  // 4-D accessors for kernels.
  double& at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) {
    return data_[((o * shape_[1] + i) * shape_[2] + y) * shape_[3] + x];
  }
  double at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) const {
    return data_[((o * shape_[1] + i) * shape_[2] + y) * shape_[3] + x];
  }

  double item() const;
  double sum() const;
  bool all_finite() const;

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Threading. Kernels may split work over output channels/rows; every output
// element is still reduced by a single thread in a fixed order, so results are
// bit-identical for any thread count.

void set_num_threads(unsigned n);
unsigned num_threads();

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, stride 1, zero padding 1, 3x3 kernels).

/// input C_in x H x W, kernel C_out x C_in x 3 x 3 -> C_out x H x W.
Tensor conv2d(const Tensor& input, const Tensor& kernel);
/// Gradient of conv2d w.r.t. its input.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel);
/// Gradient of conv2d w.r.t. its kernel.
Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input);

// ---------------------------------------------------------------------------
// 2x upsampling.

enum class Align {
  corners,     // output endpoints coincide with input endpoints
  half_pixel,  // pixel-centre convention, edges clamped
};

/// Bilinear 2x upsampling of a C x H x W map.
Tensor upsample2x(const Tensor& input, Align align = Align::corners);
Tensor upsample2x_backward(const Tensor& grad_out, const Shape& input_shape,
                           Align align = Align::corners);

/**
 * Learnable 2x upsampling: transposed convolution with a 4x4 kernel,
 * stride 2, padding 1. kernel is C_in x C_out x 4 x 4; output is
 * C_out x 2H x 2W.
 */
Tensor deconv2x(const Tensor& input, const Tensor& kernel);
Tensor deconv2x_backward_input(const Tensor& grad_out, const Tensor& kernel);
Tensor deconv2x_backward_kernel(const Tensor& grad_out, const Tensor& input);

/// 2x2 average pooling, stride 2. H and W must be even.
Tensor avgpool2x(const Tensor& input);
Tensor avgpool2x_backward(const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Elementwise.

enum class BinaryOp { add, mul };

/**
 * Pointwise binary op. b must have a's shape, or be a 1 x H x W map
 * broadcast across the channels of a C x H x W tensor a.
 */
Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
bool broadcasts_over_channels(const Shape& a, const Shape& b);

Tensor sigmoid(const Tensor& a);
Tensor negate(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);

double sigmoid(double x);
double softplus(double x);

/// Sums a C x H x W map over channels into 1 x H x W.
Tensor channel_sum(const Tensor& a);
/// Reverse of channel_sum: broadcasts 1 x H x W onto `channels` channels.
Tensor channel_broadcast(const Tensor& a, std::size_t channels);
/// Stacks C_i x H x W maps along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);
/// Adds bias[c] to every pixel of channel c.
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);

}  // namespace sacrf
