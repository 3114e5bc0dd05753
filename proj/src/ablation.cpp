#include "sacrf/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "sacrf/random.hpp"

namespace sacrf {

AblationConfig::AblationConfig() {
  train.epochs = 60;
  train.lr = 2e-6;  // for 64x64 scenes
  train.batch_size = 4;
}

void AblationConfig::validate() const {
  if (train_count < 1 || test_count < 1) {
    throw std::invalid_argument("ablation needs at least one train and one test scene");
  }
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  model.validate();
  train.validate();
}

AblationConfig AblationConfig::from_key_values(const KeyValues& kv) {
  AblationConfig c;
  KeyValues model_kv = c.model.to_key_values(), train_kv = c.train.to_key_values();
  for (const auto& [k, v] : kv) {
    if (k == "train_count") c.train_count = parse_u64(k, v);
    else if (k == "test_count") c.test_count = parse_u64(k, v);
    else if (k == "height") c.height = parse_u64(k, v);
    else if (k == "width") c.width = parse_u64(k, v);
    else if (k == "seeds") {
      c.seeds.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.seeds.push_back(parse_u64(k, item));
    } else if (train_kv.count(k)) {
      train_kv[k] = v;
    } else {
      model_kv[k] = v;
    }
  }
  c.model = ToyConfig::from_key_values(model_kv);
  c.train = TrainConfig::from_key_values(train_kv);
  c.validate();
  return c;
}

KeyValues AblationConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  kv.erase("fusion");
  for (const auto& [k, v] : train.to_key_values()) kv[k] = v;
  kv["train_count"] = std::to_string(train_count);
  kv["test_count"] = std::to_string(test_count);
  kv["height"] = std::to_string(height);
  kv["width"] = std::to_string(width);
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    s += (i ? "," : "") + std::to_string(seeds[i]);
  }
  kv["seeds"] = s;
  return kv;
}

std::vector<AblationRow> run_ablation(const AblationConfig& config,
                                      const std::function<void(const AblationRow&)>& on_row) {
  config.validate();
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : config.seeds) {
    const auto scenes = generate_dataset(
        seed, {config.train_count + config.test_count, config.height, config.width});
    const std::span<const SyntheticScene> all(scenes);
    const auto train_set = all.first(config.train_count);
    const auto test_set = all.subspan(config.train_count);
    std::vector<Tensor> gts;
    for (const auto& s : test_set) gts.push_back(s.depth.values());

    for (FusionMode mode : kAllFusionModes) {
      ToyConfig mc = config.model;
      mc.fusion = mode;
      ToyModel model(mc, seed);
      TrainConfig tc = config.train;
      tc.seed = mix_seed(seed, 1);
      const TrainResult tr = train(model, train_set, tc);

      std::vector<Tensor> preds;
      for (const auto& s : test_set) preds.push_back(model.predict(s.rgb));
      AblationRow row;
      row.variant = mode;
      row.seed = seed;
      row.metrics = compute_metrics(preds, gts);
      row.final_train_loss = tr.epoch_loss.empty() ? tr.initial_loss : tr.epoch_loss.back();
      if (on_row) on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,seed,rel,rms,log10,delta1,delta2,delta3,final_train_loss\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  fusion_name(r.variant), static_cast<unsigned long long>(r.seed), m.rel,
                  m.rms, m.log10, m.delta1, m.delta2, m.delta3, r.final_train_loss);
    os << buf;
  }
}

OrderingCheck check_ablation_ordering(const std::vector<AblationRow>& rows,
                                      double tie_tolerance) {
  OrderingCheck out;
  for (std::size_t v = 0; v < 4; ++v) {
    std::vector<double> rms;
    for (const auto& r : rows) {
      if (r.variant == kAllFusionModes[v]) rms.push_back(r.metrics.rms);
    }
    if (rms.empty()) {
      out.summary = std::string("no rows for ") + fusion_name(kAllFusionModes[v]);
      return out;
    }
    std::sort(rms.begin(), rms.end());
    const std::size_t n = rms.size();
    out.median_rms[v] = n % 2 ? rms[n / 2] : 0.5 * (rms[n / 2 - 1] + rms[n / 2]);
  }
  // better variants sit at higher indices and must not have larger rms
  bool within = true;
  for (std::size_t v = 0; v + 1 < 4; ++v) {
    const double worse = out.median_rms[v], better = out.median_rms[v + 1];
    if (better > worse) {
      ++out.violations;
      const double excess = (better - worse) / worse;
      out.worst_violation = std::max(out.worst_violation, excess);
      if (excess > tie_tolerance) within = false;
    }
  }
  out.pass = out.violations == 0 || (out.violations == 1 && within);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "median rms naive=%.4f no_attn=%.4f attn=%.4f structured=%.4f "
                "inversions=%d worst=%.2f%%",
                out.median_rms[0], out.median_rms[1], out.median_rms[2], out.median_rms[3],
                out.violations, 100.0 * out.worst_violation);
  out.summary = buf;
  return out;
}

}  // namespace sacrf
