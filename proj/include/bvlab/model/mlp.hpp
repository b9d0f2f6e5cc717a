#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "bvlab/data/dataset.hpp"
#include "bvlab/grad/graph.hpp"
#include "bvlab/grad/tensor.hpp"

namespace bvlab::model {

enum class Activation { relu, sigmoid };
enum class Head { linear, softmax };
enum class LossKind { mse, cross_entropy };

std::string_view to_string(Activation a);
std::string_view to_string(Head h);
std::string_view to_string(LossKind l);
Activation parse_activation(std::string_view name);
Head parse_head(std::string_view name);
LossKind parse_loss(std::string_view name);

// An empty hidden list gives a purely affine model.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::sigmoid;
  Head head = Head::linear;

  void validate() const;
  // MSE for a linear head, cross-entropy for softmax.
  LossKind natural_loss() const noexcept {
    return head == Head::softmax ? LossKind::cross_entropy : LossKind::mse;
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// weight is [fan_in, fan_out] so a batch [n, fan_in] maps to [n, fan_out].
struct Layer {
  grad::Tensor weight;
  grad::Tensor bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

class Model {
 public:
  Model(MlpSpec spec, std::vector<Layer> layers, std::uint64_t seed);

  const MlpSpec& spec() const noexcept { return spec_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t parameter_count() const noexcept;

  // Mean training loss per epoch, filled in by train().
  const std::vector<double>& loss_history() const noexcept { return loss_history_; }
  void append_loss(double loss) { loss_history_.push_back(loss); }

  bool same_parameters(const Model& other) const { return layers_ == other.layers_; }

 private:
  MlpSpec spec_;
  std::vector<Layer> layers_;
  std::uint64_t seed_;
  std::vector<double> loss_history_;
};

// Parameters drawn Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a
// generator keyed by the seed.
Model build_mlp(const MlpSpec& spec, std::uint64_t seed);

// A model's computation recorded on a fresh graph.
struct ForwardGraph {
  grad::Graph graph;
  grad::NodeId input;
  std::vector<grad::NodeId> weights;
  std::vector<grad::NodeId> biases;
  // Linear output for a linear head, logits for softmax.
  grad::NodeId output;
  // Only set for a softmax head.
  std::optional<grad::NodeId> log_probs;

  grad::Bindings bind(const Model& model, const grad::Tensor& x) const;
};

ForwardGraph build_forward_graph(const MlpSpec& spec);

// Batch [n, d] -> [n, out]; a single input [d] -> [out]. The softmax head
// returns probabilities.
grad::Tensor predict(const Model& model, const grad::Tensor& x);

// Row-wise log-softmax of the logits; softmax head only.
grad::Tensor log_probabilities(const Model& model, const grad::Tensor& x);

// Per-row loss: (f(x) - y)^2 for MSE, -log p_y for cross-entropy.
std::vector<double> per_sample_loss(const Model& model, const grad::Tensor& x,
                                    const data::Targets& y, LossKind loss);

// Row r holds grad_x L(model(x_r), y_r). Same shape as x.
grad::Tensor input_gradient(const Model& model, const grad::Tensor& x, const data::Targets& y,
                            LossKind loss);

// Row r holds grad_x f(x_r) for a single-output linear head.
grad::Tensor output_gradient(const Model& model, const grad::Tensor& x);

// Row r holds grad_x log p_cls(x_r) for a softmax head.
grad::Tensor log_prob_gradient(const Model& model, const grad::Tensor& x, std::size_t cls);

// Predicted class per row; ties resolve to the lowest index.
std::vector<std::size_t> predict_classes(const Model& model, const grad::Tensor& x);

}  // namespace bvlab::model
