#include "sacrf/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "sacrf/random.hpp"

namespace sacrf {

namespace {

// Output bias starts at softplus^-1 of a typical scene depth in meters.
constexpr double kDepthPrior = 4.0;

std::string idx(const char* stem, std::size_t i, const char* leaf) {
  return std::string(stem) + std::to_string(i) + leaf;
}

std::size_t decoder_channels(std::size_t channels, std::size_t level) {
  const std::size_t c = channels >> (level + 1);
  return c == 0 ? 1 : c;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

}  // namespace

const char* fusion_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::naive_concat: return "naive_concat";
    case FusionMode::crf_no_attention: return "crf_no_attention";
    case FusionMode::crf_attention: return "crf_attention";
    case FusionMode::crf_structured: return "crf_structured";
  }
  return "?";
}

FusionMode parse_fusion(const std::string& name) {
  for (FusionMode m : kAllFusionModes) {
    if (name == fusion_name(m)) return m;
  }
  throw std::invalid_argument("unknown fusion mode '" + name + "'");
}

void ToyConfig::validate() const {
  if (scales < 2) throw std::invalid_argument("scales must be >= 2");
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  if (!(crf_init_scale >= 0.0) || !std::isfinite(crf_init_scale)) {
    throw std::invalid_argument("crf_init_scale must be finite and >= 0");
  }
  crf.validate();
}

InferenceConfig ToyConfig::effective_crf() const {
  InferenceConfig c = crf;
  c.frozen_attention.reset();
  c.structured_attention = true;
  if (fusion == FusionMode::crf_no_attention) c.frozen_attention = 1.0;
  if (fusion == FusionMode::crf_attention) c.structured_attention = false;
  return c;
}

ToyConfig ToyConfig::from_key_values(const KeyValues& kv) {
  ToyConfig c;
  KeyValues crf_kv;
  for (const auto& [k, v] : kv) {
    if (k == "scales") c.scales = parse_count(k, v);
    else if (k == "channels") c.channels = parse_count(k, v);
    else if (k == "downsample_levels") c.downsample_levels = parse_count(k, v);
    else if (k == "fusion") c.fusion = parse_fusion(v);
    else if (k == "crf_init_scale") c.crf_init_scale = parse_real(k, v);
    else if (k == "train_crf") c.train_crf = parse_bool(k, v);
    else if (k == "iterations" || k == "update_intermediate_scales") crf_kv[k] = v;
    else throw std::invalid_argument("unknown model key '" + k + "'");
  }
  c.crf = InferenceConfig::from_key_values(crf_kv);
  c.validate();
  return c;
}

KeyValues ToyConfig::to_key_values() const {
  KeyValues kv = crf.to_key_values();
  kv["scales"] = std::to_string(scales);
  kv["channels"] = std::to_string(channels);
  kv["downsample_levels"] = std::to_string(downsample_levels);
  kv["fusion"] = fusion_name(fusion);
  kv["crf_init_scale"] = format_real(crf_init_scale);
  kv["train_crf"] = train_crf ? "true" : "false";
  return kv;
}

void ToyModel::add(std::string name, Tensor value) {
  params_.push_back({std::move(name), std::move(value), true});
}

ToyModel::ToyModel(const ToyConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x70794d6f64656cULL));
  const std::size_t C = config_.channels, S = config_.scales;
  const std::size_t L = config_.downsample_levels;

  auto weights = [&](Shape shape, double fan_in, double gain = 1.0) {
    Tensor t(std::move(shape));
    const double bound = gain * std::sqrt(3.0 / fan_in);
    for (auto& v : t.data()) v = uniform(rng, -bound, bound);
    return t;
  };

  add("enc.stem.w", weights({C, 3, 3, 3}, 27.0));
  add("enc.stem.b", Tensor::zeros({C}));
  for (std::size_t l = 0; l < L; ++l) {
    add(idx("enc.down", l, ".w"), weights({C, C, 3, 3}, 9.0 * C));
    add(idx("enc.down", l, ".b"), Tensor::zeros({C}));
  }
  for (std::size_t s = 0; s < S; ++s) {
    add(idx("enc.stage", s, ".w"), weights({C, C, 3, 3}, 9.0 * C));
    add(idx("enc.stage", s, ".b"), Tensor::zeros({C}));
    add(idx("enc.head", s, ".w"), weights({C, C, 3, 3}, 9.0 * C));
    add(idx("enc.head", s, ".b"), Tensor::zeros({C}));
  }

  std::size_t cin = C;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t cout = decoder_channels(C, l);
    // each output pixel of a stride-2 4x4 deconvolution sees 2x2 taps per input channel
    add(idx("dec.up", l, ".w"), weights({cin, cout, 4, 4}, 4.0 * cin));
    add(idx("dec.up", l, ".b"), Tensor::zeros({cout}));
    cin = cout;
  }
  add("dec.out.w", weights({1, cin, 3, 3}, 9.0 * cin));
  add("dec.out.b", Tensor::full({1}, std::log(std::expm1(kDepthPrior))));

  for (std::size_t s = 0; s + 1 < S; ++s) {
    add(idx("crf.K", s, ""), weights({C, C, 3, 3}, 9.0 * C, config_.crf_init_scale));
    add(idx("crf.beta", s, ""), weights({1, 1, 3, 3}, 9.0, config_.crf_init_scale));
  }

  add("fuse.w", weights({C, S * C, 3, 3}, 9.0 * S * C));
  add("fuse.b", Tensor::zeros({C}));

  const bool naive = config_.fusion == FusionMode::naive_concat;
  for (auto& p : params_) {
    if (p.name.rfind("crf.K", 0) == 0) {
      p.trainable = !naive && config_.train_crf;
    } else if (p.name.rfind("crf.beta", 0) == 0) {
      p.trainable = config_.fusion == FusionMode::crf_structured && config_.train_crf;
      if (config_.fusion == FusionMode::crf_attention) p.value = Tensor::zeros(p.value.shape());
    } else if (p.name.rfind("fuse.", 0) == 0) {
      p.trainable = naive;
    }
  }
}

std::size_t ToyModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

const Tensor& ToyModel::param(const std::string& name) const {
  return params_[index_of(name)].value;
}

Tensor& ToyModel::param(const std::string& name) {
  return params_[index_of(name)].value;
}

std::vector<Var> ToyModel::bind(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.value, p.name));
  return vars;
}

Var ToyModel::decode_on(Tape& tape, std::span<const Var> params, Var features) const {
  auto P = [&](const std::string& name) { return params[index_of(name)]; };
  Var h = features;
  for (std::size_t l = 0; l < config_.downsample_levels; ++l) {
    h = tape.deconv2x(h, P(idx("dec.up", l, ".w")));
    h = tape.tanh(tape.add_bias(h, P(idx("dec.up", l, ".b"))));
  }
  h = tape.add_bias(tape.conv2d(h, P("dec.out.w")), P("dec.out.b"));
  return tape.softplus(h);
}

ToyModel::Recorded ToyModel::forward(Tape& tape, std::span<const Var> params,
                                     Var rgb) const {
  if (params.size() != params_.size()) {
    throw std::invalid_argument("forward: expected " + std::to_string(params_.size()) +
                                " parameter vars, got " + std::to_string(params.size()));
  }
  const Tensor& img = tape.value(rgb);
  const std::size_t factor = std::size_t{1} << config_.downsample_levels;
  if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) % factor != 0 ||
      img.dim(2) % factor != 0 || img.dim(1) == 0 || img.dim(2) == 0) {
    throw ShapeError("forward: image must be 3 x H x W with H, W divisible by " +
                     std::to_string(factor) + ", got " + shape_str(img.shape()));
  }
  auto P = [&](const std::string& name) { return params[index_of(name)]; };
  const std::size_t S = config_.scales;

  Recorded r;
  Var h = tape.tanh(tape.add_bias(tape.conv2d(rgb, P("enc.stem.w")), P("enc.stem.b")));
  for (std::size_t l = 0; l < config_.downsample_levels; ++l) {
    h = tape.conv2d(h, P(idx("enc.down", l, ".w")));
    h = tape.avgpool2x(tape.tanh(tape.add_bias(h, P(idx("enc.down", l, ".b")))));
  }
  for (std::size_t s = 0; s < S; ++s) {
    h = tape.tanh(tape.add_bias(tape.conv2d(h, P(idx("enc.stage", s, ".w"))),
                                P(idx("enc.stage", s, ".b"))));
    r.features.push_back(tape.tanh(tape.add_bias(tape.conv2d(h, P(idx("enc.head", s, ".w"))),
                                                 P(idx("enc.head", s, ".b")))));
  }

  if (config_.fusion == FusionMode::naive_concat) {
    Var cat = tape.concat(r.features);
    r.fused = tape.add_bias(tape.conv2d(cat, P("fuse.w")), P("fuse.b"));
  } else {
    std::vector<Var> K, beta;
    for (std::size_t s = 0; s + 1 < S; ++s) {
      K.push_back(P(idx("crf.K", s, "")));
      beta.push_back(P(idx("crf.beta", s, "")));
    }
    r.crf = record_inference(tape, r.features, K, beta, config_.effective_crf());
    r.fused = r.crf.y.back();
  }
  r.depth = decode_on(tape, params, r.fused);
  return r;
}

Tensor ToyModel::predict(const Tensor& rgb) const {
  Tape tape;
  const auto params = bind(tape);
  const Var img = tape.leaf(rgb, "rgb");
  return tape.value(forward(tape, params, img).depth);
}

MultiScaleFeatures ToyModel::encode(const Tensor& rgb) const {
  Tape tape;
  const auto params = bind(tape);
  const Var img = tape.leaf(rgb, "rgb");
  const Recorded r = forward(tape, params, img);
  std::vector<Tensor> maps;
  for (Var v : r.features) maps.push_back(tape.value(v));
  return MultiScaleFeatures(std::move(maps));
}

KernelBank ToyModel::kernels() const {
  KernelBank kb;
  for (std::size_t s = 0; s + 1 < config_.scales; ++s) {
    kb.K.push_back(param(idx("crf.K", s, "")));
    kb.beta.push_back(param(idx("crf.beta", s, "")));
  }
  return kb;
}

Tensor ToyModel::decode(const Tensor& features) const {
  if (features.rank() != 3 || features.dim(0) != config_.channels) {
    throw ShapeError("decode: expected " + std::to_string(config_.channels) +
                     " x h x w features, got " + shape_str(features.shape()));
  }
  Tape tape;
  const auto params = bind(tape);
  const Var f = tape.leaf(features, "features");
  return tape.value(decode_on(tape, params, f));
}

void ToyModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  KeyValues kv = config_.to_key_values();
  kv["kind"] = "toy_model";
  kv["num_params"] = std::to_string(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    save_ten(dir / (p.name + ".ten"), p.value);
    kv["param." + std::to_string(i)] = p.name + " " + shape_str(p.value.shape()) +
                                       (p.trainable ? "" : " frozen");
  }
  std::ofstream os(dir / "manifest.txt");
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  write_key_values(os, kv);
}

ToyModel ToyModel::load(const std::filesystem::path& dir) {
  KeyValues kv = load_key_values(dir / "manifest.txt");
  if (kv["kind"] != "toy_model") {
    throw FormatError(dir.string() + ": manifest is not a toy_model checkpoint");
  }
  KeyValues cfg_kv;
  for (const auto& [k, v] : kv) {
    if (k == "kind" || k == "num_params" || k.rfind("param.", 0) == 0) continue;
    cfg_kv[k] = v;
  }
  ToyModel m(ToyConfig::from_key_values(cfg_kv), 0);
  for (auto& p : m.params_) {
    Tensor t = load_ten(dir / (p.name + ".ten"));
    if (t.shape() != p.value.shape()) {
      throw ShapeError(p.name + ": checkpoint holds " + shape_str(t.shape()) +
                       ", model expects " + shape_str(p.value.shape()));
    }
    p.value = std::move(t);
  }
  return m;
}

}  // namespace sacrf
