#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sacrf/ablation.hpp"
#include "sacrf/bench.hpp"
#include "sacrf/crf.hpp"
#include "sacrf/dataset.hpp"
#include "sacrf/io.hpp"
#include "sacrf/meanfield.hpp"
#include "sacrf/metrics.hpp"
#include "sacrf/model.hpp"
#include "sacrf/random.hpp"
#include "sacrf/selfcheck.hpp"
#include "sacrf/train.hpp"

namespace fs = std::filesystem;

namespace sacrf {

namespace {

// Thrown for problems with the command's inputs; maps to kExitInput.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--threads", c.threads, "worker threads for tensor kernels")
      ->check(CLI::Range(1u, 1024u));
}

KeyValues read_config(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw InputError("config file not found: " + path);
  return load_key_values(path);
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw InputError("--out is required");
  return c.out;
}

/// Loads <prefix>0.ten, <prefix>1.ten, ... until the first gap.
std::vector<Tensor> load_sequence(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<Tensor> out;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / (prefix + std::to_string(i) + ".ten");
    if (!fs::exists(p)) break;
    out.push_back(load_ten(p));
  }
  return out;
}

MultiScaleFeatures load_features(const fs::path& dir) {
  auto maps = load_sequence(dir, "x_");
  if (maps.size() < 2) {
    throw InputError(dir.string() + ": expected x_0.ten .. x_{S-1}.ten with S >= 2, found " +
                     std::to_string(maps.size()));
  }
  return MultiScaleFeatures(std::move(maps));
}

KernelBank load_kernels(const fs::path& dir, const MultiScaleFeatures& x) {
  KernelBank kb;
  kb.K = load_sequence(dir, "K_");
  kb.beta = load_sequence(dir, "beta_");
  check_kernels(kb, x.num_scales(), x.channels());
  return kb;
}

Tensor load_depth(const fs::path& p) {
  if (!fs::exists(p)) throw InputError("file not found: " + p.string());
  return p.extension() == ".pgm" ? load_depth_pgm(p) : load_ten(p);
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    const auto n = parse_u64("--size", s);
    return {n, n};
  }
  return {parse_u64("--size", s.substr(0, x)), parse_u64("--size", s.substr(x + 1))};
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InputError("cannot write " + p.string());
  os << text;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  Common c;
  std::string features, kernels, decoder;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const fs::path dir = require_out(a.c);
  const InferenceConfig cfg = InferenceConfig::from_key_values(read_config(a.c.config));
  const MultiScaleFeatures x = load_features(a.features);
  const KernelBank kb = load_kernels(a.kernels, x);
  std::optional<ToyModel> decoder;
  if (!a.decoder.empty()) {
    decoder = ToyModel::load(a.decoder);
    if (decoder->config().channels != x.channels()) {
      throw InputError("decoder expects " + std::to_string(decoder->config().channels) +
                       " channels, features have " + std::to_string(x.channels()));
    }
  }

  const InferenceState st = run_inference(x, kb, cfg);
  for (const auto& t : st.y.scales) {
    if (!t.all_finite()) throw std::runtime_error("inference produced non-finite features");
  }
  fs::create_directories(dir);
  save_ten(dir / "y_ref.ten", st.y.reference());
  for (std::size_t s = 0; s < st.y.scales.size(); ++s) {
    save_ten(dir / ("y_" + std::to_string(s) + ".ten"), st.y.scales[s]);
  }
  for (std::size_t s = 0; s < st.a.maps.size(); ++s) {
    save_ten(dir / ("a_" + std::to_string(s) + ".ten"), st.a.maps[s]);
  }
  KeyValues manifest = cfg.to_key_values();
  manifest["scales"] = std::to_string(x.num_scales());
  manifest["channels"] = std::to_string(x.channels());
  manifest["height"] = std::to_string(x.height());
  manifest["width"] = std::to_string(x.width());
  const EnergyBreakdown e = total_energy(st.y, st.a, x, kb);
  manifest["energy"] = format_real(e.total);
  if (decoder) {
    const Tensor depth = decoder->decode(st.y.reference());
    save_ten(dir / "depth.ten", depth);
    save_depth_pgm(dir / "depth.pgm", depth);
    manifest["depth_shape"] = shape_str(depth.shape());
  }
  std::ostringstream ms;
  write_key_values(ms, manifest);
  write_text(dir / "config.txt", ms.str());
  out << "wrote " << dir.string() << " (" << cfg.iterations << " iterations, energy "
      << format_real(e.total) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- energy

struct EnergyArgs {
  Common c;
  std::string features, kernels, latent, attention;
};

int cmd_energy(const EnergyArgs& a, std::ostream& out) {
  const MultiScaleFeatures x = load_features(a.features);
  const KernelBank kb = load_kernels(a.kernels, x);
  LatentFeatures y;
  AttentionMaps att;
  if (a.latent.empty() != a.attention.empty()) {
    throw InputError("--latent and --attention must be given together");
  }
  if (a.latent.empty()) {
    const InferenceState st =
        run_inference(x, kb, InferenceConfig::from_key_values(read_config(a.c.config)));
    y = st.y;
    att = st.a;
  } else {
    y.scales = load_sequence(a.latent, "y_");
    att.maps = load_sequence(a.attention, "a_");
    check_latent(y, x);
    check_attention(att, x);
  }
  const EnergyBreakdown e = total_energy(y, att, x, kb);
  std::ostringstream s;
  write_key_values(s, {{"unary", format_real(e.unary)},
                       {"pairwise", format_real(e.pairwise)},
                       {"attention_smoothing", format_real(e.attention_smoothing)},
                       {"total", format_real(e.total)}});
  out << s.str();
  if (!a.c.out.empty()) write_text(a.c.out, s.str());
  return kExitOk;
}

// ---------------------------------------------------------------- grad-check

struct GradArgs {
  Common c;
  bool model = false;
  std::size_t scales = 2, channels = 2, size = 4;
  int iterations = 2;
  bool intermediate = false;
  double threshold = 1e-4;
};

int cmd_grad_check(const GradArgs& a, std::ostream& out) {
  GradCheckReport r;
  if (a.model) {
    ModelCheckSpec spec;
    spec.seed = a.c.seed;
    spec.model.scales = a.scales;
    spec.model.channels = a.channels;
    spec.model.crf.iterations = a.iterations;
    spec.model.crf.update_intermediate_scales = a.intermediate;
    spec.height = spec.width = a.size * 2;
    spec.threshold = a.threshold;
    r = model_gradient_check(spec);
  } else {
    CrfCheckSpec spec;
    spec.seed = a.c.seed;
    spec.scales = a.scales;
    spec.channels = a.channels;
    spec.height = spec.width = a.size;
    spec.iterations = a.iterations;
    spec.update_intermediate_scales = a.intermediate;
    spec.threshold = a.threshold;
    r = crf_gradient_check(spec);
  }
  std::ostringstream s;
  s << "leaf,count,max_rel_error,max_abs_error,pass\n";
  char buf[256];
  for (const auto& l : r.leaves) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.3e,%.3e,%s\n", l.name.c_str(), l.count,
                  l.max_rel_error, l.max_abs_error, l.pass ? "yes" : "no");
    s << buf;
  }
  out << s.str();
  std::snprintf(buf, sizeof buf, "%s: max relative error %.3e (threshold %.0e)\n",
                r.pass() ? "PASS" : "FAIL", r.max_rel_error(), a.threshold);
  out << buf;
  if (!a.c.out.empty()) write_text(a.c.out, s.str());
  return r.pass() ? kExitOk : kExitCompute;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common c;
  std::string data;
  std::size_t count = 8;
  std::string size = "64x64";
};

std::pair<ToyConfig, TrainConfig> split_config(const KeyValues& kv) {
  const KeyValues train_keys = TrainConfig{}.to_key_values();
  KeyValues mk, tk;
  for (const auto& [k, v] : kv) (train_keys.count(k) ? tk : mk)[k] = v;
  return {ToyConfig::from_key_values(mk), TrainConfig::from_key_values(tk)};
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const fs::path dir = require_out(a.c);
  auto [mc, tc] = split_config(read_config(a.c.config));
  tc.seed = a.c.seed;
  std::vector<SyntheticScene> data;
  if (!a.data.empty()) {
    data = load_dataset(a.data);
  } else {
    const auto [h, w] = parse_size(a.size);
    data = generate_dataset(a.c.seed, {a.count, h, w});
  }
  ToyModel model(mc, a.c.seed);
  const TrainResult r = train(model, data, tc, [&](int epoch, double loss) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.6f\n", epoch, loss);
    out << buf;
  });
  model.save(dir / "model");
  std::ostringstream csv;
  write_loss_csv(csv, r);
  write_text(dir / "loss.csv", csv.str());
  KeyValues echo = mc.to_key_values();
  for (const auto& [k, v] : tc.to_key_values()) echo[k] = v;
  echo["scenes"] = std::to_string(data.size());
  std::ostringstream cs;
  write_key_values(cs, echo);
  write_text(dir / "config.txt", cs.str());
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  Common c;
  std::string seeds;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  KeyValues kv = read_config(a.c.config);
  if (!a.seeds.empty()) kv["seeds"] = a.seeds;
  const AblationConfig cfg = AblationConfig::from_key_values(kv);
  const auto rows = run_ablation(cfg, [&](const AblationRow& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-17s seed %llu rms %.4f\n", fusion_name(r.variant),
                  static_cast<unsigned long long>(r.seed), r.metrics.rms);
    out << buf;
  });
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  if (!a.c.out.empty()) {
    write_text(fs::path(a.c.out) / "ablation.csv", csv.str());
  } else {
    out << csv.str();
  }
  const OrderingCheck ck = check_ablation_ordering(rows);
  out << ck.summary << '\n'
      << "ordering structured <= attention <= no_attention <= naive: "
      << (ck.pass ? "holds" : "does not hold") << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  Common c;
  std::string pred, gt, csv;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const Tensor pred = load_depth(a.pred);
  const Tensor gt = load_depth(a.gt);
  const MetricsReport m = compute_metrics(pred, gt);
  print_metrics_table(out, m);
  std::ostringstream csv;
  write_metrics_csv(csv, m);
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  if (!a.c.out.empty()) write_text(a.c.out, csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  Common c;
  std::string sizes = "32,64,128,256";
  BenchConfig cfg;
};

int cmd_bench(BenchArgs a, std::ostream& out) {
  a.cfg.sizes.clear();
  std::stringstream ss(a.sizes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) a.cfg.sizes.push_back(parse_u64("--sizes", item));
  }
  a.cfg.threads = a.c.threads;
  a.cfg.seed = a.c.seed;
  const auto rows = run_bench(a.cfg);
  std::ostringstream csv;
  write_bench_csv(csv, rows);
  if (!a.c.out.empty()) {
    write_text(a.c.out, csv.str());
  } else {
    out << csv.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  Common c;
  std::size_t count = 8;
  std::string size = "64x64";
  bool instance = false;
  bool zero_kernels = false;
  std::size_t scales = 3, channels = 8;
  double kernel_scale = 0.1;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  const fs::path dir = require_out(a.c);
  const auto [h, w] = parse_size(a.size);
  if (h == 0 || w == 0) throw InputError("--size must be positive");
  if (!a.instance) {
    const auto scenes = generate_dataset(a.c.seed, {a.count, h, w});
    save_dataset(dir, scenes, a.c.seed);
    out << "wrote " << scenes.size() << " scenes to " << dir.string() << '\n';
    return kExitOk;
  }
  if (a.scales < 2 || a.channels < 1) throw InputError("instance needs >= 2 scales");
  std::mt19937_64 rng(mix_seed(a.c.seed, 0x696e7374ULL));
  auto random = [&](Shape shape, double scale) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = uniform(rng, -scale, scale);
    return t;
  };
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "kernels");
  for (std::size_t s = 0; s < a.scales; ++s) {
    save_ten(dir / "features" / ("x_" + std::to_string(s) + ".ten"),
             random({a.channels, h, w}, 1.0));
  }
  const double ks = a.zero_kernels ? 0.0 : a.kernel_scale;
  for (std::size_t s = 0; s + 1 < a.scales; ++s) {
    save_ten(dir / "kernels" / ("K_" + std::to_string(s) + ".ten"),
             random({a.channels, a.channels, 3, 3}, ks));
    save_ten(dir / "kernels" / ("beta_" + std::to_string(s) + ".ten"),
             random({1, 1, 3, 3}, ks));
  }
  out << "wrote instance to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured attention CRF for multi-scale feature fusion", "sacrf"};
  app.require_subcommand(1);

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "run mean-field inference on a feature set");
  add_common(c_infer, infer.c);
  c_infer->add_option("--features", infer.features, "directory with x_<s>.ten")->required();
  c_infer->add_option("--kernels", infer.kernels, "directory with K_<s>.ten, beta_<s>.ten")
      ->required();
  c_infer->add_option("--decoder", infer.decoder, "toy model checkpoint for the depth map");

  EnergyArgs energy;
  auto* c_energy = app.add_subcommand("energy", "evaluate the CRF energy terms");
  add_common(c_energy, energy.c);
  c_energy->add_option("--features", energy.features)->required();
  c_energy->add_option("--kernels", energy.kernels)->required();
  c_energy->add_option("--latent", energy.latent, "directory with y_<s>.ten");
  c_energy->add_option("--attention", energy.attention, "directory with a_<s>.ten");

  GradArgs grad;
  auto* c_grad = app.add_subcommand("grad-check", "compare gradients with finite differences");
  add_common(c_grad, grad.c, false);
  c_grad->add_flag("--model", grad.model, "check the whole toy model, not just the CRF");
  c_grad->add_option("--scales", grad.scales)->check(CLI::Range(2, 16));
  c_grad->add_option("--channels", grad.channels)->check(CLI::Range(1, 64));
  c_grad->add_option("--size", grad.size, "CRF map side length")->check(CLI::Range(1, 64));
  c_grad->add_option("--iterations", grad.iterations)->check(CLI::Range(1, 100));
  c_grad->add_flag("--intermediate", grad.intermediate, "also update intermediate scales");
  c_grad->add_option("--threshold", grad.threshold);

  TrainArgs trn;
  auto* c_train = app.add_subcommand("train", "train the toy depth model");
  add_common(c_train, trn.c);
  c_train->add_option("--data", trn.data, "dataset directory from gen-data");
  c_train->add_option("--count", trn.count, "scenes to generate when --data is absent")
      ->check(CLI::Range(1, 100000));
  c_train->add_option("--size", trn.size, "HxW of generated scenes");

  AblateArgs abl;
  auto* c_abl = app.add_subcommand("ablate", "train and compare the four fusion variants");
  add_common(c_abl, abl.c);
  c_abl->add_option("--seeds", abl.seeds, "comma separated seed list");

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "depth error metrics between two maps");
  add_common(c_met, met.c, false);
  c_met->add_option("--pred", met.pred, ".ten or .pgm prediction")->required();
  c_met->add_option("--gt", met.gt, ".ten or .pgm ground truth")->required();
  c_met->add_option("--csv", met.csv, "also write the metrics as CSV");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "time mean-field iterations");
  add_common(c_bench, bench.c, false);
  c_bench->add_option("--sizes", bench.sizes, "comma separated square sizes");
  c_bench->add_option("--scales", bench.cfg.scales)->check(CLI::Range(2, 16));
  c_bench->add_option("--channels", bench.cfg.channels)->check(CLI::Range(1, 1024));
  c_bench->add_option("--iterations", bench.cfg.iterations)->check(CLI::Range(1, 1000));
  c_bench->add_option("--repeats", bench.cfg.repeats)->check(CLI::Range(1, 1000));

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic dataset or CRF instance");
  add_common(c_gen, gen.c, false);
  c_gen->add_option("--count", gen.count)->check(CLI::Range(1, 100000));
  c_gen->add_option("--size", gen.size, "HxW");
  c_gen->add_flag("--instance", gen.instance, "write random features and kernels instead");
  c_gen->add_flag("--zero-kernels", gen.zero_kernels, "with --instance, all-zero kernels");
  c_gen->add_option("--scales", gen.scales)->check(CLI::Range(2, 16));
  c_gen->add_option("--channels", gen.channels)->check(CLI::Range(1, 1024));
  c_gen->add_option("--kernel-scale", gen.kernel_scale);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  const unsigned saved_threads = num_threads();
  auto run = [&]() -> int {
    auto threads_of = [&](const Common& c) { set_num_threads(c.threads); };
    if (*c_infer) { threads_of(infer.c); return cmd_infer(infer, out); }
    if (*c_energy) { threads_of(energy.c); return cmd_energy(energy, out); }
    if (*c_grad) { threads_of(grad.c); return cmd_grad_check(grad, out); }
    if (*c_train) { threads_of(trn.c); return cmd_train(trn, out); }
    if (*c_abl) { threads_of(abl.c); return cmd_ablate(abl, out); }
    if (*c_met) { threads_of(met.c); return cmd_metrics(met, out); }
    if (*c_bench) return cmd_bench(bench, out);
    if (*c_gen) { threads_of(gen.c); return cmd_gen_data(gen, out); }
    return kExitInput;
  };
  int code = kExitOk;
  try {
    code = run();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitCompute;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  } catch (const std::invalid_argument& e) {
    // includes ShapeError and NonPositiveDepth
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitCompute;
  }
  set_num_threads(saved_threads);
  return code;
}

}  // namespace sacrf
