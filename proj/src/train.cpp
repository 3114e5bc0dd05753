#include "sacrf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "sacrf/random.hpp"

namespace sacrf {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("lr must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw std::invalid_argument("weight_decay must be finite and >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "epochs") c.epochs = static_cast<int>(parse_int(k, v));
    else if (k == "lr") c.lr = parse_real(k, v);
    else if (k == "momentum") c.momentum = parse_real(k, v);
    else if (k == "weight_decay") c.weight_decay = parse_real(k, v);
    else if (k == "batch_size") c.batch_size = parse_u64(k, v);
    else if (k == "seed") c.seed = parse_u64(k, v);
    else throw std::invalid_argument("unknown training key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValues TrainConfig::to_key_values() const {
  return {{"epochs", std::to_string(epochs)},
          {"lr", format_real(lr)},
          {"momentum", format_real(momentum)},
          {"weight_decay", format_real(weight_decay)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)}};
}

double image_loss_and_gradient(const ToyModel& model, const SyntheticScene& scene,
                               std::vector<Tensor>* grads) {
  Tape tape;
  const auto params = model.bind(tape);
  const Var rgb = tape.leaf(scene.rgb, "rgb");
  const Var gt = tape.leaf(scene.depth.values(), "depth");
  const auto rec = model.forward(tape, params, rgb);
  const Var loss = tape.squared_error(rec.depth, gt);
  const double value = tape.value(loss).item();
  if (grads) {
    const Gradients g = backward(tape, loss);
    grads->clear();
    for (Var p : params) grads->push_back(g[p]);
  }
  return value;
}

double mean_loss(const ToyModel& model, std::span<const SyntheticScene> scenes) {
  double total = 0.0;
  for (const auto& s : scenes) total += image_loss_and_gradient(model, s, nullptr);
  return scenes.empty() ? 0.0 : total / static_cast<double>(scenes.size());
}

TrainResult train(ToyModel& model, std::span<const SyntheticScene> data,
                  const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  auto& params = model.parameters();
  std::vector<Tensor> velocity;
  for (const auto& p : params) velocity.push_back(Tensor::zeros(p.value.shape()));

  TrainResult result;
  result.initial_loss = mean_loss(model, data);
  if (!std::isfinite(result.initial_loss)) {
    throw DivergenceError("initial loss is not finite");
  }

  std::mt19937_64 rng(mix_seed(config.seed, 0x7368756666ULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> per_image(data.size());
  std::vector<Tensor> batch_grad, image_grad;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Fisher-Yates with the portable uniform draw
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(i)));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      batch_grad.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        const double loss = image_loss_and_gradient(model, data[i], &image_grad);
        if (!std::isfinite(loss)) {
          throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) +
                                " on image " + std::to_string(i));
        }
        per_image[i] = loss;
        if (batch_grad.empty()) {
          batch_grad = std::move(image_grad);
          image_grad.clear();
        } else {
          for (std::size_t p = 0; p < batch_grad.size(); ++p) {
            batch_grad[p] = add(batch_grad[p], image_grad[p]);
          }
        }
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].trainable) continue;
        auto w = params[p].value.data();
        auto v = velocity[p].data();
        const auto g = batch_grad[p].data();
        for (std::size_t e = 0; e < w.size(); ++e) {
          const double step = g[e] * inv_b + config.weight_decay * w[e];
          if (!std::isfinite(step)) {
            throw DivergenceError("gradient of " + params[p].name +
                                  " became non-finite at epoch " + std::to_string(epoch));
          }
          v[e] = config.momentum * v[e] + step;
          w[e] -= config.lr * v[e];
        }
      }
    }
    // summed in image order so that the value does not depend on the shuffle
    double total = 0.0;
    for (double l : per_image) total += l;
    const double mean = total / static_cast<double>(data.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

void write_loss_csv(std::ostream& os, const TrainResult& result) {
  char buf[64];
  os << "epoch,loss\n";
  std::snprintf(buf, sizeof buf, "0,%.17g\n", result.initial_loss);
  os << buf;
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
    os << buf;
  }
}

}  // namespace sacrf
