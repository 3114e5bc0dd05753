#include "sacrf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

namespace sacrf {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                     shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

namespace {

std::atomic<unsigned> g_threads{1};

// Runs fn(i) for i in [0, n), contiguous chunks per thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned t = std::min<std::size_t>(g_threads.load(), n);
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(t);
  const std::size_t chunk = (n + t - 1) / t;
  for (unsigned w = 0; w < t; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

void require_map(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected C x H x W map, got " +
                     shape_str(t.shape()));
  }
}

void require_conv_kernel(const Tensor& input, const Tensor& kernel) {
  require_map(input, "conv2d input");
  if (kernel.rank() != 4 || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
    throw ShapeError("conv2d: kernel must be C_out x C_in x 3 x 3, got " +
                     shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input is " + shape_str(input.shape()));
  }
}

}  // namespace

void set_num_threads(unsigned n) { g_threads.store(std::max(1u, n)); }
unsigned num_threads() { return g_threads.load(); }

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  require_conv_kernel(input, kernel);
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernel.dim(0);
  Tensor out({cout, h, w});
  if (h == 0 || w == 0) return out;
  const double* in = input.data().data();
  const double* k = kernel.data().data();
  double* o = out.data().data();

  parallel_for(cout, [&](std::size_t co) {
    double* plane = o + co * h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = in + ci * h * w;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wt = k[((co * cin + ci) * 3 + ky) * 3 + kx];
          // output x range with x + kx - 1 in [0, w)
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          for (std::size_t y = 0; y < h; ++y) {
            const long iy = static_cast<long>(y + ky) - 1;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const double* row = src + iy * w + kx;
            double* dst = plane + y * w;
            for (std::size_t x = x0; x < x1; ++x) dst[x] += wt * row[x - 1];
          }
        }
      }
    }
  });
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel) {
  require_map(grad_out, "conv2d_backward_input");
  if (kernel.rank() != 4 || kernel.dim(0) != grad_out.dim(0)) {
    throw ShapeError("conv2d_backward_input: kernel " +
                     shape_str(kernel.shape()) + " vs grad " +
                     shape_str(grad_out.shape()));
  }
  const std::size_t cout = kernel.dim(0), cin = kernel.dim(1);
  const std::size_t h = grad_out.dim(1), w = grad_out.dim(2);
  Tensor gin({cin, h, w});
  if (h == 0 || w == 0) return gin;
  const double* g = grad_out.data().data();
  const double* k = kernel.data().data();
  double* gi = gin.data().data();

  parallel_for(cin, [&](std::size_t ci) {
    double* plane = gi + ci * h * w;
    for (std::size_t co = 0; co < cout; ++co) {
      const double* src = g + co * h * w;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wt = k[((co * cin + ci) * 3 + ky) * 3 + kx];
          // input pixel ix receives from output x = ix - kx + 1
          const std::size_t x0 = kx == 2 ? 1 : 0;
          const std::size_t x1 = kx == 0 ? w - 1 : w;
          for (std::size_t iy = 0; iy < h; ++iy) {
            const long y = static_cast<long>(iy) - static_cast<long>(ky) + 1;
            if (y < 0 || y >= static_cast<long>(h)) continue;
            const double* row = src + y * w;
            double* dst = plane + iy * w;
            for (std::size_t ix = x0; ix < x1; ++ix) {
              dst[ix] += wt * row[ix + 1 - kx];
            }
          }
        }
      }
    }
  });
  return gin;
}

Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input) {
  require_map(grad_out, "conv2d_backward_kernel");
  require_map(input, "conv2d_backward_kernel input");
  if (grad_out.dim(1) != input.dim(1) || grad_out.dim(2) != input.dim(2)) {
    throw ShapeError("conv2d_backward_kernel: grad " +
                     shape_str(grad_out.shape()) + " vs input " +
                     shape_str(input.shape()));
  }
  const std::size_t cout = grad_out.dim(0), cin = input.dim(0);
  const std::size_t h = input.dim(1), w = input.dim(2);
  Tensor gk({cout, cin, 3, 3});
  if (h == 0 || w == 0) return gk;
  const double* g = grad_out.data().data();
  const double* in = input.data().data();
  double* dk = gk.data().data();

  parallel_for(cout, [&](std::size_t co) {
    const double* gp = g + co * h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* ip = in + ci * h * w;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          double acc = 0.0;
          for (std::size_t y = 0; y < h; ++y) {
            const long iy = static_cast<long>(y + ky) - 1;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const double* row = ip + iy * w + kx;
            const double* grow = gp + y * w;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * row[x - 1];
          }
          dk[((co * cin + ci) * 3 + ky) * 3 + kx] = acc;
        }
      }
    }
  });
  return gk;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> upsample_taps(std::size_t n, Align align) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t d = 0; d < 2 * n; ++d) {
    double src = 0.0;
    if (align == Align::corners) {
      src = n > 1 ? static_cast<double>(d) * static_cast<double>(n - 1) /
                        static_cast<double>(2 * n - 1)
                  : 0.0;
    } else {
      src = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    }
    const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[d] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample2x(const Tensor& input, Align align) {
  require_map(input, "upsample2x");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  if (h == 0 || w == 0) return out;
  const auto ty = upsample_taps(h, align);
  const auto tx = upsample_taps(w, align);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < 2 * w; ++x) {
        const Tap& b = tx[x];
        const double top = (1.0 - b.w1) * input.at(ch, a.i0, b.i0) +
                           b.w1 * input.at(ch, a.i0, b.i1);
        const double bot = (1.0 - b.w1) * input.at(ch, a.i1, b.i0) +
                           b.w1 * input.at(ch, a.i1, b.i1);
        out.at(ch, y, x) = (1.0 - a.w1) * top + a.w1 * bot;
      }
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& grad_out, const Shape& input_shape,
                           Align align) {
  if (input_shape.size() != 3 || grad_out.rank() != 3 ||
      grad_out.dim(0) != input_shape[0] ||
      grad_out.dim(1) != 2 * input_shape[1] ||
      grad_out.dim(2) != 2 * input_shape[2]) {
    throw ShapeError("upsample2x_backward: grad " +
                     shape_str(grad_out.shape()) + " vs input " +
                     shape_str(input_shape));
  }
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  Tensor gin(input_shape);
  if (h == 0 || w == 0) return gin;
  const auto ty = upsample_taps(h, align);
  const auto tx = upsample_taps(w, align);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < 2 * w; ++x) {
        const Tap& b = tx[x];
        const double g = grad_out.at(ch, y, x);
        gin.at(ch, a.i0, b.i0) += (1.0 - a.w1) * (1.0 - b.w1) * g;
        gin.at(ch, a.i0, b.i1) += (1.0 - a.w1) * b.w1 * g;
        gin.at(ch, a.i1, b.i0) += a.w1 * (1.0 - b.w1) * g;
        gin.at(ch, a.i1, b.i1) += a.w1 * b.w1 * g;
      }
    }
  }
  return gin;
}

namespace {

void require_deconv(const Tensor& input, const Tensor& kernel) {
  require_map(input, "deconv2x input");
  if (kernel.rank() != 4 || kernel.dim(2) != 4 || kernel.dim(3) != 4 ||
      kernel.dim(0) != input.dim(0)) {
    throw ShapeError("deconv2x: kernel must be C_in x C_out x 4 x 4 with C_in=" +
                     std::to_string(input.dim(0)) + ", got " +
                     shape_str(kernel.shape()));
  }
}

}  // namespace

// Output pixel (2*iy - 1 + ky, 2*ix - 1 + kx) receives input (iy, ix) through
// kernel tap (ky, kx).
Tensor deconv2x(const Tensor& input, const Tensor& kernel) {
  require_deconv(input, kernel);
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernel.dim(1);
  const std::size_t oh = 2 * h, ow = 2 * w;
  Tensor out({cout, oh, ow});
  parallel_for(cout, [&](std::size_t co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t iy = 0; iy < h; ++iy) {
        for (std::size_t ix = 0; ix < w; ++ix) {
          const double v = input.at(ci, iy, ix);
          for (std::size_t ky = 0; ky < 4; ++ky) {
            const long oy = 2 * static_cast<long>(iy) - 1 + static_cast<long>(ky);
            if (oy < 0 || oy >= static_cast<long>(oh)) continue;
            for (std::size_t kx = 0; kx < 4; ++kx) {
              const long ox =
                  2 * static_cast<long>(ix) - 1 + static_cast<long>(kx);
              if (ox < 0 || ox >= static_cast<long>(ow)) continue;
              out.at(co, oy, ox) += v * kernel.at(ci, co, ky, kx);
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor deconv2x_backward_input(const Tensor& grad_out, const Tensor& kernel) {
  require_map(grad_out, "deconv2x_backward_input");
  if (kernel.rank() != 4 || kernel.dim(1) != grad_out.dim(0) ||
      grad_out.dim(1) % 2 || grad_out.dim(2) % 2) {
    throw ShapeError("deconv2x_backward_input: kernel " +
                     shape_str(kernel.shape()) + " vs grad " +
                     shape_str(grad_out.shape()));
  }
  const std::size_t cin = kernel.dim(0), cout = kernel.dim(1);
  const std::size_t oh = grad_out.dim(1), ow = grad_out.dim(2);
  const std::size_t h = oh / 2, w = ow / 2;
  Tensor gin({cin, h, w});
  parallel_for(cin, [&](std::size_t ci) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < w; ++ix) {
        double acc = 0.0;
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t ky = 0; ky < 4; ++ky) {
            const long oy = 2 * static_cast<long>(iy) - 1 + static_cast<long>(ky);
            if (oy < 0 || oy >= static_cast<long>(oh)) continue;
            for (std::size_t kx = 0; kx < 4; ++kx) {
              const long ox =
                  2 * static_cast<long>(ix) - 1 + static_cast<long>(kx);
              if (ox < 0 || ox >= static_cast<long>(ow)) continue;
              acc += grad_out.at(co, oy, ox) * kernel.at(ci, co, ky, kx);
            }
          }
        }
        gin.at(ci, iy, ix) = acc;
      }
    }
  });
  return gin;
}

Tensor deconv2x_backward_kernel(const Tensor& grad_out, const Tensor& input) {
  require_map(grad_out, "deconv2x_backward_kernel");
  require_map(input, "deconv2x_backward_kernel input");
  if (grad_out.dim(1) != 2 * input.dim(1) ||
      grad_out.dim(2) != 2 * input.dim(2)) {
    throw ShapeError("deconv2x_backward_kernel: grad " +
                     shape_str(grad_out.shape()) + " vs input " +
                     shape_str(input.shape()));
  }
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = grad_out.dim(0);
  const std::size_t oh = 2 * h, ow = 2 * w;
  Tensor gk({cin, cout, 4, 4});
  parallel_for(cin, [&](std::size_t ci) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ky = 0; ky < 4; ++ky) {
        for (std::size_t kx = 0; kx < 4; ++kx) {
          double acc = 0.0;
          for (std::size_t iy = 0; iy < h; ++iy) {
            const long oy = 2 * static_cast<long>(iy) - 1 + static_cast<long>(ky);
            if (oy < 0 || oy >= static_cast<long>(oh)) continue;
            for (std::size_t ix = 0; ix < w; ++ix) {
              const long ox =
                  2 * static_cast<long>(ix) - 1 + static_cast<long>(kx);
              if (ox < 0 || ox >= static_cast<long>(ow)) continue;
              acc += input.at(ci, iy, ix) * grad_out.at(co, oy, ox);
            }
          }
          gk.at(ci, co, ky, kx) = acc;
        }
      }
    }
  });
  return gk;
}

Tensor avgpool2x(const Tensor& input) {
  require_map(input, "avgpool2x");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) {
    throw ShapeError("avgpool2x: spatial size must be even, got " +
                     shape_str(input.shape()));
  }
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = 0; x < w / 2; ++x) {
        out.at(ch, y, x) =
            0.25 * (input.at(ch, 2 * y, 2 * x) + input.at(ch, 2 * y, 2 * x + 1) +
                    input.at(ch, 2 * y + 1, 2 * x) +
                    input.at(ch, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

Tensor avgpool2x_backward(const Tensor& grad_out) {
  require_map(grad_out, "avgpool2x_backward");
  const std::size_t c = grad_out.dim(0), h = grad_out.dim(1), w = grad_out.dim(2);
  Tensor gin({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t x = 0; x < 2 * w; ++x) {
        gin.at(ch, y, x) = 0.25 * grad_out.at(ch, y / 2, x / 2);
      }
    }
  }
  return gin;
}

bool broadcasts_over_channels(const Shape& a, const Shape& b) {
  return a.size() == 3 && b.size() == 3 && b[0] == 1 && a[1] == b[1] &&
         a[2] == b[2];
}

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  Tensor out(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      out[i] = op == BinaryOp::add ? a[i] + b[i] : a[i] * b[i];
    }
    return out;
  }
  if (!broadcasts_over_channels(a.shape(), b.shape())) {
    throw ShapeError("elementwise: cannot combine " + shape_str(a.shape()) +
                     " with " + shape_str(b.shape()));
  }
  const std::size_t plane = a.dim(1) * a.dim(2);
  for (std::size_t c = 0; c < a.dim(0); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = c * plane + p;
      out[i] = op == BinaryOp::add ? a[i] + b[p] : a[i] * b[p];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, BinaryOp::add);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, BinaryOp::mul);
}

double sigmoid(double x) {
  // stays inside the open interval even where the exact value rounds to 0 or 1
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

namespace {

template <typename F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return map_values(a, [](double x) { return sigmoid(x); });
}
Tensor negate(const Tensor& a) {
  return map_values(a, [](double x) { return -x; });
}
Tensor scale(const Tensor& a, double c) {
  return map_values(a, [c](double x) { return c * x; });
}
Tensor tanh(const Tensor& a) {
  return map_values(a, [](double x) { return std::tanh(x); });
}
Tensor softplus(const Tensor& a) {
  return map_values(a, [](double x) { return softplus(x); });
}

Tensor channel_sum(const Tensor& a) {
  require_map(a, "channel_sum");
  const std::size_t plane = a.dim(1) * a.dim(2);
  Tensor out({1, a.dim(1), a.dim(2)});
  for (std::size_t c = 0; c < a.dim(0); ++c) {
    for (std::size_t p = 0; p < plane; ++p) out[p] += a[c * plane + p];
  }
  return out;
}

Tensor channel_broadcast(const Tensor& a, std::size_t channels) {
  require_map(a, "channel_broadcast");
  if (a.dim(0) != 1) {
    throw ShapeError("channel_broadcast: expected 1 x H x W, got " +
                     shape_str(a.shape()));
  }
  const std::size_t plane = a.dim(1) * a.dim(2);
  Tensor out({channels, a.dim(1), a.dim(2)});
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(a.data().begin(), plane, out.data().begin() + c * plane);
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require_map(p, "concat_channels");
    if (p.dim(1) != parts[0].dim(1) || p.dim(2) != parts[0].dim(2)) {
      throw ShapeError("concat_channels: spatial mismatch " +
                       shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    channels += p.dim(0);
  }
  Tensor out({channels, parts[0].dim(1), parts[0].dim(2)});
  auto it = out.data().begin();
  for (const auto& p : parts) it = std::copy(p.data().begin(), p.data().end(), it);
  return out;
}

Tensor add_channel_bias(const Tensor& a, const Tensor& bias) {
  require_map(a, "add_channel_bias");
  if (bias.size() != a.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) +
                     " for map " + shape_str(a.shape()));
  }
  const std::size_t plane = a.dim(1) * a.dim(2);
  Tensor out(a.shape());
  for (std::size_t c = 0; c < a.dim(0); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      out[c * plane + p] = a[c * plane + p] + bias[c];
    }
  }
  return out;
}

}  // namespace sacrf
