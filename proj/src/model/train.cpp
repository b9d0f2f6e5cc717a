#include "bvlab/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/common/parallel.hpp"
#include "bvlab/common/rng.hpp"

namespace bvlab::model {

using grad::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (adversarial) {
    adversarial->validate();
    const auto kind = adversarial->kind;
    if (kind == attack::AttackKind::bias_dir || kind == attack::AttackKind::var_dir) {
      throw ConfigError("ensemble-direction attacks cannot drive adversarial training");
    }
  }
}

namespace {

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  std::vector<double> values = a.data();
  values.insert(values.end(), b.data().begin(), b.data().end());
  return Tensor::matrix(a.rows() + b.rows(), a.cols(), std::move(values));
}

data::Targets concat_targets(const data::Targets& a, const data::Targets& b) {
  data::Targets out = a;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

// One SGD step on the mean loss; returns the batch mean loss.
double sgd_step(Model& model, const Tensor& x, const data::Targets& y, const TrainConfig& cfg) {
  ForwardGraph fg = build_forward_graph(model.spec());
  grad::Graph& g = fg.graph;
  grad::Bindings bindings = fg.bind(model, x);
  grad::NodeId loss;
  if (cfg.loss == LossKind::cross_entropy) {
    loss = g.scale(g.mean(g.pick(*fg.log_probs, y.labels)), -1.0);
  } else {
    const grad::NodeId target = g.input("y");
    bindings.emplace(target, Tensor::matrix(y.values.size(), 1, y.values));
    loss = g.mean(g.square(g.sub(fg.output, target)));
  }
  const double value = g.forward(bindings).item();
  if (!std::isfinite(value)) return value;
  const grad::Bindings adjoints = g.backward(loss);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    Layer& layer = model.layers()[l];
    const Tensor& dw = adjoints.at(fg.weights[l]);
    const Tensor& db = adjoints.at(fg.biases[l]);
    for (std::size_t i = 0; i < dw.size(); ++i) layer.weight[i] -= cfg.learning_rate * dw[i];
    for (std::size_t i = 0; i < db.size(); ++i) layer.bias[i] -= cfg.learning_rate * db[i];
  }
  return value;
}

}  // namespace

Model train(Model model, const data::LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.dim() != model.spec().input_dim) {
    throw ShapeError("dataset width " + std::to_string(data.dim()) + " does not match model input " +
                     std::to_string(model.spec().input_dim));
  }
  if (cfg.loss != model.spec().natural_loss()) {
    throw ConfigError("loss " + std::string(to_string(cfg.loss)) + " does not match the " +
                      std::string(to_string(model.spec().head)) + " head");
  }

  CounterRng order_rng(model.seed(), 0x7EA1);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      Tensor x = data::gather_rows(data.inputs, rows);
      data::Targets y = data.targets.subset(rows);
      if (cfg.adversarial && cfg.adversarial->kind != attack::AttackKind::none) {
        Tensor x_adv = attack::attack_model(model, x, y, *cfg.adversarial).x_adv;
        if (cfg.mix_clean) {
          y = concat_targets(y, y);
          x = concat_rows(x, x_adv);
        } else {
          x = std::move(x_adv);
        }
      }
      const double batch_loss = sgd_step(model, x, y, cfg);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch), epoch);
      }
      weighted += batch_loss * static_cast<double>(rows.size());
      seen += rows.size();
    }
    model.append_loss(weighted / static_cast<double>(seen));
  }
  return model;
}

Ensemble train_ensemble(const MlpSpec& spec, const std::vector<std::uint64_t>& seeds,
                        const data::LabeledDataset& data, const TrainConfig& cfg,
                        std::size_t threads) {
  if (seeds.empty()) throw ConfigError("ensemble needs at least one seed");
  std::vector<std::optional<Model>> slots(seeds.size());
  parallel_for(seeds.size(), threads,
               [&](std::size_t k) { slots[k] = train(build_mlp(spec, seeds[k]), data, cfg); });
  std::vector<Model> members;
  for (auto& slot : slots) members.push_back(std::move(*slot));
  return Ensemble(std::move(members));
}

}  // namespace bvlab::model
