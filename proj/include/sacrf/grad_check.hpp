#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sacrf/tape.hpp"
#include "sacrf/tensor.hpp"

namespace sacrf {

/// Gradients of a loss w.r.t. the CRF block's inputs and parameters.
struct GradientSet {
  std::vector<Tensor> d_X;
  std::vector<Tensor> d_K;
  std::vector<Tensor> d_beta;
  // Encoder/decoder parameters, keyed by leaf name.
  std::map<std::string, Tensor> d_params;
};

/// Picks the CRF-relevant entries out of a full backward pass.
GradientSet gather_gradients(const Tape& tape, const Gradients& grads,
                             std::span<const Var> x, std::span<const Var> K,
                             std::span<const Var> beta,
                             std::span<const Var> params = {});

/// Central differences (f(p + h e_k) - f(p - h e_k)) / 2h for every k.
std::vector<double> finite_difference(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> params, double h);

/**
 * Central differences of the scalar `root` w.r.t. each listed leaf, obtained
 * by perturbing the leaf and replaying the tape. Leaves are restored before
 * returning.
 */
std::vector<Tensor> finite_difference(Tape& tape, Var root,
                                      std::span<const Var> leaves, double h);

/**
 * |a - n| / max(|a|, |n|), except that differences at or below `abs_floor`
 * count as exact agreement. Central differences carry an O(h^2) truncation
 * error, so a vanishing analytic gradient cannot be matched in relative terms.
 */
double relative_error(double analytic, double numeric, double abs_floor = 1e-8);

struct LeafCheck {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  double threshold = 0.0;
  bool pass() const;
  double max_rel_error() const;
};

/// Compares backward() against finite differences for each listed leaf.
GradCheckReport check_gradients(Tape& tape, Var root,
                                std::span<const Var> leaves, double h = 1e-5,
                                double threshold = 1e-4, double abs_floor = 1e-8);

}  // namespace sacrf
