#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sacrf/metrics.hpp"
#include "sacrf/model.hpp"
#include "sacrf/train.hpp"

namespace sacrf {

struct AblationConfig {
  std::size_t train_count = 24;
  std::size_t test_count = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  ToyConfig model;  // fusion is overridden per variant
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  AblationConfig();
  void validate() const;
  static AblationConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct AblationRow {
  FusionMode variant = FusionMode::naive_concat;
  std::uint64_t seed = 0;
  MetricsReport metrics;  // pooled over every test pixel
  double final_train_loss = 0.0;
};

/**
 * For every seed, draws one train/test split and one initial weight set,
 * then trains and evaluates each of the four fusion variants from that same
 * starting point. Rows are ordered by seed, then by variant.
 */
std::vector<AblationRow> run_ablation(
    const AblationConfig& config,
    const std::function<void(const AblationRow&)>& on_row = {});

/// variant,seed,rel,rms,log10,delta1,delta2,delta3,final_train_loss
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

struct OrderingCheck {
  // indexed like kAllFusionModes: naive, no attention, attention, structured
  std::array<double, 4> median_rms{};
  int violations = 0;
  double worst_violation = 0.0;  // relative excess of the worst inverted pair
  bool pass = false;
  std::string summary;
};

/**
 * Checks structured <= attention <= no attention <= naive on median rms.
 * One inverted adjacent pair is tolerated if it is within `tie_tolerance`
 * relative to the smaller value.
 */
OrderingCheck check_ablation_ordering(const std::vector<AblationRow>& rows,
                                      double tie_tolerance = 0.02);

}  // namespace sacrf
