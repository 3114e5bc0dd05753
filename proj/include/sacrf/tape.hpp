#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sacrf/tensor.hpp"

namespace sacrf {

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
  bool operator==(const Var&) const = default;
};

enum class OpKind {
  leaf,
  conv2d,
  deconv2x,
  upsample2x,
  avgpool2x,
  add,
  mul,
  negate,
  scale,
  sigmoid,
  tanh,
  softplus,
  channel_sum,
  concat,
  bias_add,
  sum,
  squared_error,
};

const char* op_name(OpKind kind);

class Gradients;
class Tape;
Gradients backward(const Tape& tape, Var root, double seed);

/**
 * Records a computation as a list of nodes in creation order, which is a
 * topological order. Each node keeps its forward value; backward reuses the
 * saved values instead of recomputing them.
 *
 * Leaves are inputs and parameters. replay() re-evaluates every non-leaf
 * node from the current leaf values with the same kernels used at record
 * time, so an unchanged tape replays to bit-identical values.
 */
class Tape {
 public:
  Var leaf(Tensor value, std::string name = {});

  Var conv2d(Var input, Var kernel);
  Var deconv2x(Var input, Var kernel);
  Var upsample2x(Var input);
  Var avgpool2x(Var input);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var negate(Var a);
  Var scale(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  Var channel_sum(Var a);
  Var concat(std::span<const Var> parts);
  Var add_bias(Var input, Var bias);
  /// Sum of all entries, as a rank-0 scalar.
  Var sum(Var a);
  /// sum_i (pred_i - target_i)^2, as a rank-0 scalar.
  Var squared_error(Var pred, Var target);

  const Tensor& value(Var v) const;
  const std::string& name(Var v) const;
  OpKind kind(Var v) const;
  bool is_leaf(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  Var last() const;
  std::vector<Var> leaves() const;

  /// Replace a leaf's value. The shape must not change.
  void set_leaf(Var v, Tensor value);
  void replay();

 private:
  friend class Gradients;
  friend Gradients backward(const Tape&, Var, double);

  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    double param = 0.0;
    Tensor value;
    std::string name;
  };

  Var push(OpKind kind, std::vector<std::size_t> inputs, double param = 0.0);
  Tensor evaluate(const Node& node) const;
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

/// Gradient of a scalar root with respect to every node of a tape.
class Gradients {
 public:
  const Tensor& operator[](Var v) const { return grads_.at(v.id); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tape&, Var, double);
  std::vector<Tensor> grads_;
};

/**
 * Reverse-mode sweep from `root`, seeded with d(root) = seed. The root must
 * hold exactly one value; anything else is rejected with ShapeError.
 */
Gradients backward(const Tape& tape, Var root, double seed = 1.0);
/// Same, rooted at the most recently recorded node.
Gradients backward(const Tape& tape, double seed = 1.0);

}  // namespace sacrf
