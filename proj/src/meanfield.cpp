#include "sacrf/meanfield.hpp"

#include <stdexcept>
#include <string>

namespace sacrf {

void InferenceConfig::validate() const {
  if (iterations < 1) {
    throw std::invalid_argument("iterations must be >= 1, got " +
                                std::to_string(iterations));
  }
}

InferenceConfig InferenceConfig::from_key_values(const KeyValues& kv) {
  InferenceConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "iterations") {
      const long long n = parse_int(key, value);
      if (n < 1 || n > 1000000) {
        throw std::invalid_argument("config: iterations must be in [1, 1e6], got " + value);
      }
      cfg.iterations = static_cast<int>(n);
    } else if (key == "update_intermediate_scales") {
      cfg.update_intermediate_scales = parse_bool(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

KeyValues InferenceConfig::to_key_values() const {
  return {{"iterations", std::to_string(iterations)},
          {"update_intermediate_scales",
           update_intermediate_scales ? "true" : "false"}};
}

InferenceState initial_state(const MultiScaleFeatures& x,
                             const InferenceConfig& cfg) {
  InferenceState st;
  st.y.scales = x.scales();
  st.a = constant_attention(x, cfg.frozen_attention.value_or(kInitialAttention));
  st.iteration = 0;
  return st;
}

namespace {

void require_state(const InferenceState& st, const MultiScaleFeatures& x,
                   const KernelBank& kernels) {
  if (!st.initialized()) {
    throw std::invalid_argument("mean-field update on uninitialized state");
  }
  check_latent(st.y, x);
  check_attention(st.a, x);
  check_kernels(kernels, x.num_scales(), x.channels());
}

}  // namespace

AttentionMaps update_attention(const InferenceState& state,
                               const MultiScaleFeatures& x,
                               const KernelBank& kernels, bool structured) {
  require_state(state, x, kernels);
  const Tensor& y_ref = state.y.reference();
  AttentionMaps out;
  for (std::size_t s = 0; s + 1 < x.num_scales(); ++s) {
    Tensor evidence = channel_sum(mul(state.y.scales[s], conv2d(y_ref, kernels.K[s])));
    if (structured) {
      evidence = add(evidence, conv2d(state.a.maps[s], kernels.beta[s]));
    }
    out.maps.push_back(sigmoid(negate(evidence)));
  }
  return out;
}

Tensor update_reference_features(const InferenceState& state,
                                 const MultiScaleFeatures& x,
                                 const KernelBank& kernels) {
  require_state(state, x, kernels);
  Tensor y_ref = x.reference();
  for (std::size_t s = 0; s + 1 < x.num_scales(); ++s) {
    y_ref = add(y_ref, mul(conv2d(state.y.scales[s], kernels.K[s]), state.a.maps[s]));
  }
  return y_ref;
}

Tensor update_intermediate_features(const InferenceState& state,
                                    const MultiScaleFeatures& x,
                                    const KernelBank& kernels, std::size_t s) {
  require_state(state, x, kernels);
  if (s + 1 >= x.num_scales()) {
    throw std::out_of_range("intermediate scale index " + std::to_string(s) +
                            " out of range [0, " +
                            std::to_string(x.num_scales() - 1) + ")");
  }
  return add(x[s], mul(conv2d(state.y.reference(), kernels.K[s]), state.a.maps[s]));
}

InferenceState run_inference(const MultiScaleFeatures& x,
                             const KernelBank& kernels,
                             const InferenceConfig& cfg) {
  cfg.validate();
  check_kernels(kernels, x.num_scales(), x.channels());
  InferenceState st = initial_state(x, cfg);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (!cfg.frozen_attention) {
      st.a = update_attention(st, x, kernels, cfg.structured_attention);
    }
    st.y.scales.back() = update_reference_features(st, x, kernels);
    if (cfg.update_intermediate_scales) {
      for (std::size_t s = 0; s + 1 < x.num_scales(); ++s) {
        st.y.scales[s] = update_intermediate_features(st, x, kernels, s);
      }
    }
    st.iteration = it + 1;
  }
  return st;
}

RecordedInference record_inference(Tape& tape, std::span<const Var> x,
                                   std::span<const Var> K,
                                   std::span<const Var> beta,
                                   const InferenceConfig& cfg) {
  cfg.validate();
  std::vector<Tensor> maps;
  for (auto v : x) maps.push_back(tape.value(v));
  const MultiScaleFeatures shapes(std::move(maps));
  const std::size_t n = shapes.num_scales() - 1;
  if (K.size() != n || beta.size() != n) {
    throw ShapeError("record_inference: expected " + std::to_string(n) +
                     " kernels per family");
  }
  KernelBank probe;
  for (std::size_t s = 0; s < n; ++s) {
    probe.K.push_back(tape.value(K[s]));
    probe.beta.push_back(tape.value(beta[s]));
  }
  check_kernels(probe, shapes.num_scales(), shapes.channels());

  RecordedInference r;
  r.y.assign(x.begin(), x.end());
  const double a0 = cfg.frozen_attention.value_or(kInitialAttention);
  for (std::size_t s = 0; s < n; ++s) {
    r.a.push_back(tape.leaf(Tensor::full({1, shapes.height(), shapes.width()}, a0),
                            "a0_" + std::to_string(s)));
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    if (!cfg.frozen_attention) {
      std::vector<Var> next;
      for (std::size_t s = 0; s < n; ++s) {
        Var evidence = tape.channel_sum(tape.mul(r.y[s], tape.conv2d(r.y.back(), K[s])));
        if (cfg.structured_attention) {
          evidence = tape.add(evidence, tape.conv2d(r.a[s], beta[s]));
        }
        next.push_back(tape.sigmoid(tape.negate(evidence)));
      }
      r.a = std::move(next);
    }
    Var y_ref = x.back();
    for (std::size_t s = 0; s < n; ++s) {
      y_ref = tape.add(y_ref, tape.mul(tape.conv2d(r.y[s], K[s]), r.a[s]));
    }
    r.y.back() = y_ref;
    if (cfg.update_intermediate_scales) {
      for (std::size_t s = 0; s < n; ++s) {
        r.y[s] = tape.add(x[s], tape.mul(tape.conv2d(r.y.back(), K[s]), r.a[s]));
      }
    }
  }
  return r;
}

}  // namespace sacrf
