#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sacrf/crf.hpp"
#include "sacrf/io.hpp"
#include "sacrf/meanfield.hpp"
#include "sacrf/tape.hpp"
#include "sacrf/tensor.hpp"

namespace sacrf {

enum class FusionMode {
  naive_concat,      // conv over the channel-concatenated scales
  crf_no_attention,  // CRF with every gate held at 1
  crf_attention,     // CRF with gates but no beta smoothing
  crf_structured,    // full CRF with structured attention
};

const char* fusion_name(FusionMode mode);
/// Throws std::invalid_argument on an unknown name.
FusionMode parse_fusion(const std::string& name);
inline constexpr FusionMode kAllFusionModes[] = {
    FusionMode::naive_concat, FusionMode::crf_no_attention,
    FusionMode::crf_attention, FusionMode::crf_structured};

struct ToyConfig {
  std::size_t scales = 3;
  std::size_t channels = 8;
  // Each level halves the resolution; features live at 1 / 2^levels.
  std::size_t downsample_levels = 2;
  FusionMode fusion = FusionMode::crf_structured;
  InferenceConfig crf;
  double crf_init_scale = 0.05;
  bool train_crf = true;

  void validate() const;
  /// The inference settings actually used, with the fusion mode applied.
  InferenceConfig effective_crf() const;

  static ToyConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/**
 * Encoder -> multi-scale fusion -> decoder.
 *
 * The encoder is a stem conv at full resolution, `downsample_levels` rounds
 * of conv + tanh + 2x average pooling, then a chain of S stages; stage s
 * emits X_s through its own head conv + tanh. Fusion is either the CRF (whose
 * reference-scale output feeds the decoder) or a conv over the concatenated
 * scales. The decoder undoes each pooling with a 4x4 stride-2 deconvolution
 * that halves the channel count, and ends in a 1-channel conv + softplus.
 *
 * Parameters are always created in the same order from the seed, whatever
 * the fusion mode, so variants built from one seed share their weights.
 */
class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(const ToyConfig& config, std::uint64_t seed);

  const ToyConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Throws std::out_of_range for an unknown name.
  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);

  /// One tape leaf per parameter, in parameter order.
  std::vector<Var> bind(Tape& tape) const;

  struct Recorded {
    std::vector<Var> features;  // X_s
    RecordedInference crf;      // empty for naive_concat
    Var fused;                  // decoder input
    Var depth;                  // 1 x H x W
  };
  Recorded forward(Tape& tape, std::span<const Var> params, Var rgb) const;

  Tensor predict(const Tensor& rgb) const;
  MultiScaleFeatures encode(const Tensor& rgb) const;
  KernelBank kernels() const;
  /// Decoder applied to a C x h x w map.
  Tensor decode(const Tensor& features) const;

  /// Directory of <name>.ten files plus manifest.txt.
  void save(const std::filesystem::path& dir) const;
  static ToyModel load(const std::filesystem::path& dir);

 private:
  std::size_t index_of(const std::string& name) const;
  Var decode_on(Tape& tape, std::span<const Var> params, Var features) const;
  void add(std::string name, Tensor value);

  ToyConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace sacrf
