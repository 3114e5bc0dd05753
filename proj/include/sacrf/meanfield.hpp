#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sacrf/crf.hpp"
#include "sacrf/io.hpp"
#include "sacrf/tape.hpp"

namespace sacrf {

enum class Initialization { features_from_observations };

struct InferenceConfig {
  int iterations = 3;
  bool update_intermediate_scales = false;
  Initialization initialization = Initialization::features_from_observations;
  // Holds every gate at this value and skips attention updates.
  std::optional<double> frozen_attention;
  // When false the beta-smoothing message is dropped (beta == 0).
  bool structured_attention = true;

  /// Throws std::invalid_argument on iterations < 1.
  void validate() const;

  /// Reads `iterations` and `update_intermediate_scales`; unknown keys throw.
  static InferenceConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

/// Initial gate value used inside the smoothing term on the first pass.
inline constexpr double kInitialAttention = 0.5;

struct InferenceState {
  LatentFeatures y;
  AttentionMaps a;
  int iteration = 0;

  bool initialized() const { return !y.scales.empty(); }
};

/// Y = X and every gate at 0.5 (or the frozen value).
InferenceState initial_state(const MultiScaleFeatures& x,
                             const InferenceConfig& cfg = {});

/**
 * New gates for every intermediate scale:
 *   a_hat   = sum_c  y_s (.) (K_s * y_S)
 *   a_tilde = beta_s * a_s
 *   a_s    <- sigmoid(-(a_hat + a_tilde))
 * With structured = false the a_tilde term is omitted.
 */
AttentionMaps update_attention(const InferenceState& state,
                               const MultiScaleFeatures& x,
                               const KernelBank& kernels,
                               bool structured = true);

/// y_S <- x_S + sum_{s<S} a_s (.) (K_s * y_s)
Tensor update_reference_features(const InferenceState& state,
                                 const MultiScaleFeatures& x,
                                 const KernelBank& kernels);

/// y_s <- x_s + a_s (.) (K_s * y_S), for intermediate scale s (0-based).
Tensor update_intermediate_features(const InferenceState& state,
                                    const MultiScaleFeatures& x,
                                    const KernelBank& kernels, std::size_t s);

/**
 * Unrolled mean-field inference. Each iteration updates the gates, then the
 * reference features, then (optionally) every intermediate scale.
 */
InferenceState run_inference(const MultiScaleFeatures& x,
                             const KernelBank& kernels,
                             const InferenceConfig& cfg = {});

// Differentiable variant recorded on a tape.

struct RecordedInference {
  std::vector<Var> y;  // one per scale; y.back() is the reference scale
  std::vector<Var> a;  // one per intermediate scale
};

RecordedInference record_inference(Tape& tape, std::span<const Var> x,
                                   std::span<const Var> K,
                                   std::span<const Var> beta,
                                   const InferenceConfig& cfg = {});

}  // namespace sacrf
