#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/data/dataset.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::model {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  LossKind loss = LossKind::mse;
  // When set, every minibatch is perturbed against the current parameters.
  std::optional<attack::AttackSpec> adversarial;
  // false: the perturbed batch replaces the clean one; true: both are used.
  bool mix_clean = false;

  void validate() const;
};

// Plain minibatch SGD on the mean loss. Batch order comes from a stream
// keyed by the model seed, so the result is a pure function of
// (model, data, cfg). Throws NumericError with the epoch index if the
// loss goes non-finite.
Model train(Model model, const data::LabeledDataset& data, const TrainConfig& cfg);

// Builds and trains one model per seed. Members are trained on up to
// `threads` threads; the result does not depend on the thread count.
Ensemble train_ensemble(const MlpSpec& spec, const std::vector<std::uint64_t>& seeds,
                        const data::LabeledDataset& data, const TrainConfig& cfg,
                        std::size_t threads = 1);

}  // namespace bvlab::model
