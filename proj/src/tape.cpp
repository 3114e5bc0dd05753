#include "sacrf/tape.hpp"

#include <stdexcept>

namespace sacrf {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::deconv2x: return "deconv2x";
    case OpKind::upsample2x: return "upsample2x";
    case OpKind::avgpool2x: return "avgpool2x";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::negate: return "negate";
    case OpKind::scale: return "scale";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softplus: return "softplus";
    case OpKind::channel_sum: return "channel_sum";
    case OpKind::concat: return "concat";
    case OpKind::bias_add: return "bias_add";
    case OpKind::sum: return "sum";
    case OpKind::squared_error: return "squared_error";
  }
  return "?";
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw std::out_of_range("tape: invalid variable " + std::to_string(v.id));
  }
  return nodes_[v.id];
}

Var Tape::leaf(Tensor value, std::string name) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::push(OpKind kind, std::vector<std::size_t> inputs, double param) {
  for (auto i : inputs) node(Var{i});
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.param = param;
  n.value = evaluate(n);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor Tape::evaluate(const Node& n) const {
  auto in = [&](std::size_t k) -> const Tensor& {
    return nodes_[n.inputs[k]].value;
  };
  switch (n.kind) {
    case OpKind::leaf: return n.value;
    case OpKind::conv2d: return sacrf::conv2d(in(0), in(1));
    case OpKind::deconv2x: return sacrf::deconv2x(in(0), in(1));
    case OpKind::upsample2x: return sacrf::upsample2x(in(0));
    case OpKind::avgpool2x: return sacrf::avgpool2x(in(0));
    case OpKind::add: return sacrf::add(in(0), in(1));
    case OpKind::mul: return sacrf::mul(in(0), in(1));
    case OpKind::negate: return sacrf::negate(in(0));
    case OpKind::scale: return sacrf::scale(in(0), n.param);
    case OpKind::sigmoid: return sacrf::sigmoid(in(0));
    case OpKind::tanh: return sacrf::tanh(in(0));
    case OpKind::softplus: return sacrf::softplus(in(0));
    case OpKind::channel_sum: return sacrf::channel_sum(in(0));
    case OpKind::concat: {
      std::vector<Tensor> parts;
      parts.reserve(n.inputs.size());
      for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(in(k));
      return concat_channels(parts);
    }
    case OpKind::bias_add: return add_channel_bias(in(0), in(1));
    case OpKind::sum: return Tensor::scalar(in(0).sum());
    case OpKind::squared_error: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      if (p.shape() != t.shape()) {
        throw ShapeError("squared_error: " + shape_str(p.shape()) + " vs " +
                         shape_str(t.shape()));
      }
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        s += d * d;
      }
      return Tensor::scalar(s);
    }
  }
  throw std::logic_error("tape: unknown op");
}

Var Tape::conv2d(Var input, Var kernel) {
  return push(OpKind::conv2d, {input.id, kernel.id});
}
Var Tape::deconv2x(Var input, Var kernel) {
  return push(OpKind::deconv2x, {input.id, kernel.id});
}
Var Tape::upsample2x(Var input) { return push(OpKind::upsample2x, {input.id}); }
Var Tape::avgpool2x(Var input) { return push(OpKind::avgpool2x, {input.id}); }
Var Tape::add(Var a, Var b) { return push(OpKind::add, {a.id, b.id}); }
Var Tape::mul(Var a, Var b) { return push(OpKind::mul, {a.id, b.id}); }
Var Tape::negate(Var a) { return push(OpKind::negate, {a.id}); }
Var Tape::scale(Var a, double c) { return push(OpKind::scale, {a.id}, c); }
Var Tape::sigmoid(Var a) { return push(OpKind::sigmoid, {a.id}); }
Var Tape::tanh(Var a) { return push(OpKind::tanh, {a.id}); }
Var Tape::softplus(Var a) { return push(OpKind::softplus, {a.id}); }
Var Tape::channel_sum(Var a) { return push(OpKind::channel_sum, {a.id}); }
Var Tape::concat(std::span<const Var> parts) {
  std::vector<std::size_t> ids;
  for (auto p : parts) ids.push_back(p.id);
  return push(OpKind::concat, std::move(ids));
}
Var Tape::add_bias(Var input, Var bias) {
  return push(OpKind::bias_add, {input.id, bias.id});
}
Var Tape::sum(Var a) { return push(OpKind::sum, {a.id}); }
Var Tape::squared_error(Var pred, Var target) {
  return push(OpKind::squared_error, {pred.id, target.id});
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
const std::string& Tape::name(Var v) const { return node(v).name; }
OpKind Tape::kind(Var v) const { return node(v).kind; }
bool Tape::is_leaf(Var v) const { return node(v).kind == OpKind::leaf; }

Var Tape::last() const {
  if (nodes_.empty()) throw std::logic_error("tape is empty");
  return Var{nodes_.size() - 1};
}

std::vector<Var> Tape::leaves() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::leaf) out.push_back(Var{i});
  }
  return out;
}

void Tape::set_leaf(Var v, Tensor value) {
  if (!is_leaf(v)) throw std::logic_error("set_leaf on non-leaf node");
  if (value.shape() != nodes_[v.id].value.shape()) {
    throw ShapeError("set_leaf: shape " + shape_str(value.shape()) +
                     " differs from recorded " +
                     shape_str(nodes_[v.id].value.shape()));
  }
  nodes_[v.id].value = std::move(value);
}

void Tape::replay() {
  for (auto& n : nodes_) {
    if (n.kind != OpKind::leaf) n.value = evaluate(n);
  }
}

namespace {

void accumulate(Tensor& into, const Tensor& g) {
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

// Gradient for an operand that may have been broadcast over channels.
void accumulate_maybe_broadcast(Tensor& into, const Tensor& g) {
  if (into.shape() == g.shape()) {
    accumulate(into, g);
  } else {
    accumulate(into, channel_sum(g));
  }
}

}  // namespace

Gradients backward(const Tape& tape, Var root, double seed) {
  const auto& nodes = tape.nodes_;
  const auto& r = tape.node(root);
  if (r.value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     shape_str(r.value.shape()));
  }
  Gradients out;
  out.grads_.reserve(nodes.size());
  for (const auto& n : nodes) out.grads_.emplace_back(n.value.shape());
  auto& grads = out.grads_;
  grads[root.id][0] = seed;

  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    const auto& n = nodes[idx];
    if (n.kind == OpKind::leaf) continue;
    const Tensor& g = grads[idx];
    auto in_val = [&](std::size_t k) -> const Tensor& {
      return nodes[n.inputs[k]].value;
    };
    auto in_grad = [&](std::size_t k) -> Tensor& { return grads[n.inputs[k]]; };

    switch (n.kind) {
      case OpKind::leaf: break;
      case OpKind::conv2d:
        accumulate(in_grad(0), conv2d_backward_input(g, in_val(1)));
        accumulate(in_grad(1), conv2d_backward_kernel(g, in_val(0)));
        break;
      case OpKind::deconv2x:
        accumulate(in_grad(0), deconv2x_backward_input(g, in_val(1)));
        accumulate(in_grad(1), deconv2x_backward_kernel(g, in_val(0)));
        break;
      case OpKind::upsample2x:
        accumulate(in_grad(0), upsample2x_backward(g, in_val(0).shape()));
        break;
      case OpKind::avgpool2x:
        accumulate(in_grad(0), avgpool2x_backward(g));
        break;
      case OpKind::add:
        accumulate(in_grad(0), g);
        accumulate_maybe_broadcast(in_grad(1), g);
        break;
      case OpKind::mul:
        accumulate(in_grad(0), sacrf::mul(g, in_val(1)));
        accumulate_maybe_broadcast(in_grad(1), sacrf::mul(g, in_val(0)));
        break;
      case OpKind::negate:
        accumulate(in_grad(0), sacrf::negate(g));
        break;
      case OpKind::scale:
        accumulate(in_grad(0), sacrf::scale(g, n.param));
        break;
      case OpKind::sigmoid: {
        Tensor& gi = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          gi[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::tanh: {
        Tensor& gi = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          gi[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::softplus: {
        Tensor& gi = in_grad(0);
        const Tensor& x = in_val(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          gi[i] += g[i] * sacrf::sigmoid(x[i]);
        }
        break;
      }
      case OpKind::channel_sum:
        accumulate(in_grad(0), channel_broadcast(g, in_val(0).dim(0)));
        break;
      case OpKind::concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Tensor& gi = in_grad(k);
          for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[offset + i];
          offset += gi.size();
        }
        break;
      }
      case OpKind::bias_add: {
        accumulate(in_grad(0), g);
        Tensor& gb = in_grad(1);
        const std::size_t plane = g.dim(1) * g.dim(2);
        for (std::size_t c = 0; c < g.dim(0); ++c) {
          double s = 0.0;
          for (std::size_t p = 0; p < plane; ++p) s += g[c * plane + p];
          gb[c] += s;
        }
        break;
      }
      case OpKind::sum: {
        const double s = g.item();
        for (auto& v : in_grad(0).data()) v += s;
        break;
      }
      case OpKind::squared_error: {
        const double s = g.item();
        const Tensor& p = in_val(0);
        const Tensor& t = in_val(1);
        Tensor& gp = in_grad(0);
        Tensor& gt = in_grad(1);
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double d = 2.0 * (p[i] - t[i]) * s;
          gp[i] += d;
          gt[i] -= d;
        }
        break;
      }
    }
  }
  return out;
}

Gradients backward(const Tape& tape, double seed) {
  return backward(tape, tape.last(), seed);
}

}  // namespace sacrf
