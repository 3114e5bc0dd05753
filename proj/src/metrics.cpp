#include "sacrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace sacrf {

NonPositiveDepth::NonPositiveDepth(const std::string& which, std::size_t index,
                                   double value)
    : std::invalid_argument(which + " depth must be positive: pixel " +
                            std::to_string(index) + " has value " +
                            std::to_string(value)),
      index_(index),
      value_(value) {}

namespace {

void require_depth_shape(const Tensor& t, const char* which) {
  if (t.rank() != 3 || t.dim(0) != 1) {
    throw ShapeError(std::string(which) + " depth map must be 1 x H x W, got " +
                     shape_str(t.shape()));
  }
}

void require_positive(const Tensor& t, const char* which, std::size_t offset = 0) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || !std::isfinite(t[i])) {
      throw NonPositiveDepth(which, offset + i, t[i]);
    }
  }
}

}  // namespace

DepthMap::DepthMap(Tensor values) : values_(std::move(values)) {
  require_depth_shape(values_, "");
  require_positive(values_, "");
}

MetricsReport compute_metrics(std::span<const Tensor> preds,
                              std::span<const Tensor> gts) {
  if (preds.size() != gts.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(preds.size()) +
                     " predictions vs " + std::to_string(gts.size()) +
                     " ground-truth maps");
  }
  double sum_rel = 0.0, sum_sq = 0.0, sum_log = 0.0;
  std::size_t q = 0, n1 = 0, n2 = 0, n3 = 0;
  const double t1 = 1.25, t2 = t1 * t1, t3 = t2 * t1;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Tensor& p = preds[k];
    const Tensor& g = gts[k];
    if (p.shape() != g.shape()) {
      throw ShapeError("compute_metrics: prediction " + shape_str(p.shape()) +
                       " vs ground truth " + shape_str(g.shape()));
    }
    require_positive(p, "predicted", offset);
    require_positive(g, "ground-truth", offset);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d_hat = p[i], d = g[i];
      sum_rel += std::abs(d_hat - d) / d;
      sum_sq += (d_hat - d) * (d_hat - d);
      sum_log += std::abs(std::log10(d_hat) - std::log10(d));
      const double delta = std::max(d / d_hat, d_hat / d);
      n1 += delta < t1;
      n2 += delta < t2;
      n3 += delta < t3;
    }
    q += p.size();
    offset += p.size();
  }
  MetricsReport m;
  if (q == 0) return m;
  const auto qd = static_cast<double>(q);
  m.rel = sum_rel / qd;
  m.rms = std::sqrt(sum_sq / qd);
  m.log10 = sum_log / qd;
  m.delta1 = static_cast<double>(n1) / qd;
  m.delta2 = static_cast<double>(n2) / qd;
  m.delta3 = static_cast<double>(n3) / qd;
  return m;
}

MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt) {
  return compute_metrics(std::span<const Tensor>(&pred, 1),
                         std::span<const Tensor>(&gt, 1));
}

double square_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("square_loss: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    s += d * d;
  }
  return s;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

void print_metrics_table(std::ostream& os, const MetricsReport& m) {
  char line[128];
  std::snprintf(line, sizeof line, "%10s %10s %10s %10s %10s %10s\n", "rel",
                "rms", "log10", "delta1", "delta2", "delta3");
  os << line;
  std::snprintf(line, sizeof line, "%10s %10s %10s %10s %10s %10s\n",
                fixed4(m.rel).c_str(), fixed4(m.rms).c_str(), fixed4(m.log10).c_str(),
                fixed4(m.delta1).c_str(), fixed4(m.delta2).c_str(),
                fixed4(m.delta3).c_str());
  os << line;
}

void write_metrics_csv(std::ostream& os, const MetricsReport& m) {
  os << "rel,rms,log10,delta1,delta2,delta3\n"
     << fixed4(m.rel) << ',' << fixed4(m.rms) << ',' << fixed4(m.log10) << ','
     << fixed4(m.delta1) << ',' << fixed4(m.delta2) << ',' << fixed4(m.delta3) << '\n';
}

}  // namespace sacrf
