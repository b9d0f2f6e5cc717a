#include "bvlab/model/mlp.hpp"

#include <cmath>
#include <string>

#include "bvlab/common/error.hpp"
#include "bvlab/common/rng.hpp"

namespace bvlab::model {

using grad::Graph;
using grad::NodeId;
using grad::Tensor;

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }
std::string_view to_string(Head h) { return h == Head::linear ? "linear" : "softmax"; }
std::string_view to_string(LossKind l) { return l == LossKind::mse ? "mse" : "cross-entropy"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Head parse_head(std::string_view name) {
  if (name == "linear") return Head::linear;
  if (name == "softmax") return Head::softmax;
  throw ConfigError("unknown head '" + std::string(name) + "'");
}

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "cross-entropy" || name == "ce") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
  if (input_dim < 1) throw ConfigError("input dimension must be >= 1");
  if (output_dim < 1) throw ConfigError("output dimension must be >= 1");
  for (std::size_t h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
  }
  if (head == Head::softmax && output_dim < 2) {
    throw ConfigError("softmax head needs at least two classes");
  }
}

Model::Model(MlpSpec spec, std::vector<Layer> layers, std::uint64_t seed)
    : spec_(std::move(spec)), layers_(std::move(layers)), seed_(seed) {
  spec_.validate();
  if (layers_.size() != spec_.hidden.size() + 1) {
    throw ShapeError("spec needs " + std::to_string(spec_.hidden.size() + 1) + " layers, got " +
                     std::to_string(layers_.size()));
  }
  std::size_t fan_in = spec_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t fan_out = l < spec_.hidden.size() ? spec_.hidden[l] : spec_.output_dim;
    if (layers_[l].weight.shape() != grad::Shape{fan_in, fan_out} ||
        layers_[l].bias.shape() != grad::Shape{fan_out}) {
      throw ShapeError("layer " + std::to_string(l) + " parameters do not match the spec");
    }
    fan_in = fan_out;
  }
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const Layer& layer : layers_) total += layer.weight.size() + layer.bias.size();
  return total;
}

Model build_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  CounterRng rng(seed, 0xB0);
  std::vector<Layer> layers;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const std::size_t fan_out = l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor weight = Tensor::zeros({fan_in, fan_out});
    for (double& v : weight.values()) v = rng.uniform(-bound, bound);
    Tensor bias = Tensor::zeros({fan_out});
    for (double& v : bias.values()) v = rng.uniform(-bound, bound);
    layers.push_back({std::move(weight), std::move(bias)});
    fan_in = fan_out;
  }
  return Model(spec, std::move(layers), seed);
}

ForwardGraph build_forward_graph(const MlpSpec& spec) {
  ForwardGraph fg;
  Graph& g = fg.graph;
  fg.input = g.input("x");
  NodeId h = fg.input;
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const NodeId w = g.input("W" + std::to_string(l));
    const NodeId b = g.input("b" + std::to_string(l));
    fg.weights.push_back(w);
    fg.biases.push_back(b);
    h = g.add_row(g.matmul(h, w), b);
    if (l < spec.hidden.size()) {
      h = spec.activation == Activation::relu ? g.relu(h) : g.sigmoid(h);
    }
  }
  fg.output = h;
  if (spec.head == Head::softmax) fg.log_probs = g.log_softmax(h);
  return fg;
}

grad::Bindings ForwardGraph::bind(const Model& model, const Tensor& x) const {
  grad::Bindings bindings;
  bindings.emplace(input, x);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    bindings.emplace(weights[l], model.layers()[l].weight);
    bindings.emplace(biases[l], model.layers()[l].bias);
  }
  return bindings;
}

namespace {

// Promotes a single input to a one-row batch and checks the width.
Tensor as_batch(const Model& model, const Tensor& x, bool& promoted) {
  promoted = x.rank() == 1;
  const Tensor batch = promoted ? Tensor::matrix(1, x.size(), x.data()) : x;
  if (batch.rank() != 2 || batch.cols() != model.spec().input_dim) {
    throw ShapeError("model expects inputs of width " + std::to_string(model.spec().input_dim) +
                     ", got " + grad::shape_string(x.shape()));
  }
  return batch;
}

Tensor unbatch(Tensor t, bool promoted) {
  if (!promoted) return t;
  return Tensor::vector(t.data());
}

void check_targets(const Model& model, const Tensor& batch, const data::Targets& y,
                   LossKind loss) {
  if (y.size() != batch.rows()) {
    throw ShapeError("got " + std::to_string(y.size()) + " targets for " +
                     std::to_string(batch.rows()) + " inputs");
  }
  if (loss == LossKind::cross_entropy) {
    if (model.spec().head != Head::softmax) {
      throw ConfigError("cross-entropy loss requires a softmax head");
    }
    for (std::size_t label : y.labels) {
      if (label >= model.spec().output_dim) {
        throw ConfigError("class index " + std::to_string(label) + " out of range for " +
                          std::to_string(model.spec().output_dim) + " classes");
      }
    }
  } else {
    if (model.spec().head != Head::linear || model.spec().output_dim != 1) {
      throw ConfigError("mse loss requires a single-output linear head");
    }
    if (y.is_classification()) throw ConfigError("mse loss needs real-valued targets");
  }
}

// Appends the summed per-row loss to the graph; returns (per-row, total).
std::pair<NodeId, NodeId> attach_loss(ForwardGraph& fg, grad::Bindings& bindings,
                                      const data::Targets& y, LossKind loss) {
  Graph& g = fg.graph;
  if (loss == LossKind::cross_entropy) {
    const NodeId picked = g.pick(*fg.log_probs, y.labels);
    const NodeId per_row = g.scale(picked, -1.0);
    return {per_row, g.sum(per_row)};
  }
  const NodeId target = g.input("y");
  bindings.emplace(target, Tensor::matrix(y.values.size(), 1, y.values));
  const NodeId per_row = g.square(g.sub(fg.output, target));
  return {per_row, g.sum(per_row)};
}

}  // namespace

Tensor predict(const Model& model, const Tensor& x) {
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  ForwardGraph fg = build_forward_graph(model.spec());
  fg.graph.forward(fg.bind(model, batch));
  if (!fg.log_probs) return unbatch(fg.graph.value(fg.output), promoted);
  Tensor probs = fg.graph.value(*fg.log_probs);
  for (double& v : probs.values()) v = std::exp(v);
  return unbatch(std::move(probs), promoted);
}

Tensor log_probabilities(const Model& model, const Tensor& x) {
  if (model.spec().head != Head::softmax) {
    throw ConfigError("log probabilities need a softmax head");
  }
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  ForwardGraph fg = build_forward_graph(model.spec());
  fg.graph.forward(fg.bind(model, batch));
  return unbatch(fg.graph.value(*fg.log_probs), promoted);
}

std::vector<double> per_sample_loss(const Model& model, const Tensor& x, const data::Targets& y,
                                    LossKind loss) {
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  check_targets(model, batch, y, loss);
  ForwardGraph fg = build_forward_graph(model.spec());
  grad::Bindings bindings = fg.bind(model, batch);
  const auto [per_row, total] = attach_loss(fg, bindings, y, loss);
  fg.graph.forward(bindings);
  return fg.graph.value(per_row).data();
}

Tensor input_gradient(const Model& model, const Tensor& x, const data::Targets& y,
                      LossKind loss) {
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  check_targets(model, batch, y, loss);
  ForwardGraph fg = build_forward_graph(model.spec());
  grad::Bindings bindings = fg.bind(model, batch);
  const auto [per_row, total] = attach_loss(fg, bindings, y, loss);
  fg.graph.forward(bindings);
  const grad::Bindings adjoints = fg.graph.backward(total);
  return promoted ? Tensor::vector(adjoints.at(fg.input).data()) : adjoints.at(fg.input);
}

Tensor output_gradient(const Model& model, const Tensor& x) {
  if (model.spec().head != Head::linear || model.spec().output_dim != 1) {
    throw ConfigError("output gradient needs a single-output linear head");
  }
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  ForwardGraph fg = build_forward_graph(model.spec());
  const NodeId total = fg.graph.sum(fg.output);
  fg.graph.forward(fg.bind(model, batch));
  const grad::Bindings adjoints = fg.graph.backward(total);
  return promoted ? Tensor::vector(adjoints.at(fg.input).data()) : adjoints.at(fg.input);
}

Tensor log_prob_gradient(const Model& model, const Tensor& x, std::size_t cls) {
  if (model.spec().head != Head::softmax) throw ConfigError("log_prob_gradient needs softmax");
  if (cls >= model.spec().output_dim) {
    throw ConfigError("class index " + std::to_string(cls) + " out of range");
  }
  bool promoted = false;
  const Tensor batch = as_batch(model, x, promoted);
  ForwardGraph fg = build_forward_graph(model.spec());
  const NodeId picked = fg.graph.pick(*fg.log_probs, std::vector<std::size_t>(batch.rows(), cls));
  const NodeId total = fg.graph.sum(picked);
  fg.graph.forward(fg.bind(model, batch));
  const grad::Bindings adjoints = fg.graph.backward(total);
  return promoted ? Tensor::vector(adjoints.at(fg.input).data()) : adjoints.at(fg.input);
}

std::vector<std::size_t> predict_classes(const Model& model, const Tensor& x) {
  const Tensor scores = predict(model, x.rank() == 1 ? Tensor::matrix(1, x.size(), x.data()) : x);
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace bvlab::model
