#include "sacrf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sacrf {

GradientSet gather_gradients(const Tape& tape, const Gradients& grads,
                             std::span<const Var> x, std::span<const Var> K,
                             std::span<const Var> beta,
                             std::span<const Var> params) {
  GradientSet g;
  for (Var v : x) g.d_X.push_back(grads[v]);
  for (Var v : K) g.d_K.push_back(grads[v]);
  for (Var v : beta) g.d_beta.push_back(grads[v]);
  for (Var v : params) g.d_params[tape.name(v)] = grads[v];
  return g;
}

std::vector<double> finite_difference(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> params, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_difference: h must be > 0");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double fp = loss_fn(p);
    p[k] = orig - h;
    const double fm = loss_fn(p);
    p[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

std::vector<Tensor> finite_difference(Tape& tape, Var root,
                                      std::span<const Var> leaves, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_difference: h must be > 0");
  std::vector<Tensor> out;
  for (Var leaf : leaves) {
    const Tensor orig = tape.value(leaf);
    Tensor g(orig.shape());
    Tensor probe = orig;
    for (std::size_t k = 0; k < orig.size(); ++k) {
      probe[k] = orig[k] + h;
      tape.set_leaf(leaf, probe);
      tape.replay();
      const double fp = tape.value(root).item();
      probe[k] = orig[k] - h;
      tape.set_leaf(leaf, probe);
      tape.replay();
      const double fm = tape.value(root).item();
      probe[k] = orig[k];
      g[k] = (fp - fm) / (2.0 * h);
    }
    tape.set_leaf(leaf, orig);
    out.push_back(std::move(g));
  }
  tape.replay();
  return out;
}

double relative_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

bool GradCheckReport::pass() const {
  return std::all_of(leaves.begin(), leaves.end(),
                     [](const LeafCheck& l) { return l.pass; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& l : leaves) m = std::max(m, l.max_rel_error);
  return m;
}

GradCheckReport check_gradients(Tape& tape, Var root,
                                std::span<const Var> leaves, double h,
                                double threshold, double abs_floor) {
  const Gradients analytic = backward(tape, root);
  const std::vector<Tensor> numeric = finite_difference(tape, root, leaves, h);
  GradCheckReport report;
  report.threshold = threshold;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor& a = analytic[leaves[l]];
    const Tensor& n = numeric[l];
    LeafCheck c;
    c.name = tape.name(leaves[l]);
    if (c.name.empty()) c.name = "leaf" + std::to_string(leaves[l].id);
    c.count = a.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
      c.max_rel_error = std::max(c.max_rel_error, relative_error(a[i], n[i], abs_floor));
      c.max_abs_error = std::max(c.max_abs_error, std::abs(a[i] - n[i]));
    }
    c.pass = c.max_rel_error < threshold;
    report.leaves.push_back(std::move(c));
  }
  return report;
}

}  // namespace sacrf
