#include "sacrf/selfcheck.hpp"

#include <random>
#include <string>

#include "sacrf/dataset.hpp"
#include "sacrf/meanfield.hpp"
#include "sacrf/random.hpp"

namespace sacrf {

GradCheckReport crf_gradient_check(const CrfCheckSpec& spec) {
  if (spec.scales < 2 || spec.channels < 1 || spec.height < 1 || spec.width < 1) {
    throw std::invalid_argument("grad check needs >= 2 scales and non-empty maps");
  }
  std::mt19937_64 rng(mix_seed(spec.seed, 0x6372660ULL));
  auto random = [&](Shape shape, double scale) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = uniform(rng, -scale, scale);
    return t;
  };
  const std::size_t C = spec.channels;
  Tape tape;
  std::vector<Var> x, K, beta;
  for (std::size_t s = 0; s < spec.scales; ++s) {
    x.push_back(tape.leaf(random({C, spec.height, spec.width}, 1.0), "X" + std::to_string(s)));
  }
  for (std::size_t s = 0; s + 1 < spec.scales; ++s) {
    K.push_back(tape.leaf(random({C, C, 3, 3}, spec.kernel_scale), "K" + std::to_string(s)));
    beta.push_back(tape.leaf(random({1, 1, 3, 3}, spec.kernel_scale), "beta" + std::to_string(s)));
  }
  const Var target = tape.leaf(random({C, spec.height, spec.width}, 1.0), "target");
  InferenceConfig cfg;
  cfg.iterations = spec.iterations;
  cfg.update_intermediate_scales = spec.update_intermediate_scales;
  const auto rec = record_inference(tape, x, K, beta, cfg);
  const Var loss = tape.squared_error(rec.y.back(), target);
  const auto leaves = tape.leaves();
  return check_gradients(tape, loss, leaves, spec.h, spec.threshold);
}

ModelCheckSpec::ModelCheckSpec() {
  model.scales = 2;
  model.channels = 2;
  model.downsample_levels = 1;
  model.crf.iterations = 2;
  model.crf_init_scale = 0.5;
}

GradCheckReport model_gradient_check(const ModelCheckSpec& spec) {
  const ToyModel model(spec.model, spec.seed);
  const SyntheticScene scene = generate_scene(spec.seed, 0, spec.height, spec.width);
  Tape tape;
  const auto params = model.bind(tape);
  const Var rgb = tape.leaf(scene.rgb, "rgb");
  const Var gt = tape.leaf(scene.depth.values(), "depth");
  const auto rec = model.forward(tape, params, rgb);
  const Var loss = tape.squared_error(rec.depth, gt);
  const auto leaves = tape.leaves();
  return check_gradients(tape, loss, leaves, spec.h, spec.threshold);
}

}  // namespace sacrf
