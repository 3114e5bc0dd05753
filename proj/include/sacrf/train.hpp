#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "sacrf/dataset.hpp"
#include "sacrf/io.hpp"
#include "sacrf/model.hpp"

namespace sacrf {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-4;  // for 16x16 scenes; scale by 1/(H*W) for larger ones
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;  // drives the per-epoch shuffle

  /// lr >= 0 (0 is a no-op run), momentum in [0, 1), batch_size >= 1.
  void validate() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-image square loss, one per epoch
  double initial_loss = 0.0;       // same measure before the first update
};

/// Square loss of one image and its gradient for every parameter.
double image_loss_and_gradient(const ToyModel& model, const SyntheticScene& scene,
                               std::vector<Tensor>* grads);

/// Mean per-image square loss over the scenes.
double mean_loss(const ToyModel& model, std::span<const SyntheticScene> scenes);

/**
 * Minibatch SGD with momentum and L2 weight decay on the trainable
 * parameters:
 *   v <- mu v + (g + wd w)
 *   w <- w - lr v
 * where g is the gradient of the batch loss, the mean over images of each
 * image's summed squared depth error. Throws DivergenceError as soon as a
 * loss or gradient stops being finite.
 */
TrainResult train(ToyModel& model, std::span<const SyntheticScene> data,
                  const TrainConfig& config,
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

/// epoch,loss rows; epoch 0 is the initial loss.
void write_loss_csv(std::ostream& os, const TrainResult& result);

}  // namespace sacrf
