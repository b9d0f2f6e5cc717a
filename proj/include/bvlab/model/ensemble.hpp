#pragma once

#include <cstddef>
#include <vector>

#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::model {

// K models sharing one spec, differing only in seed. Immutable after
// construction.
class Ensemble {
 public:
  explicit Ensemble(std::vector<Model> members);

  std::size_t size() const noexcept { return members_.size(); }
  const Model& member(std::size_t k) const { return members_.at(k); }
  const std::vector<Model>& members() const noexcept { return members_; }
  const MlpSpec& spec() const noexcept { return members_.front().spec(); }

 private:
  std::vector<Model> members_;
};

// f_bar(x): mean of member predictions, [n]. Regression heads only.
grad::Tensor ensemble_mean(const Ensemble& ensemble, const grad::Tensor& x);

// grad f_bar(x): mean of member input gradients, [n, d].
grad::Tensor ensemble_mean_gradient(const Ensemble& ensemble, const grad::Tensor& x);

// Normalized geometric mean of member log-probabilities, given as K
// tensors of shape [n, c]. Returns log pi*, [n, c].
grad::Tensor kl_mean_log(const std::vector<grad::Tensor>& member_log_probs);

// pi*(x) = argmin_z mean_k KL(z || pi_k(x)), [n, c]. Softmax heads only.
grad::Tensor kl_mean(const Ensemble& ensemble, const grad::Tensor& x);

// Cached member outputs and input derivatives for a softmax ensemble on a
// fixed batch.
struct SoftmaxJets {
  // [k] -> [n, c]
  std::vector<grad::Tensor> log_probs;
  // [k][i] -> grad_x log p_{k,i}, [n, d]
  std::vector<std::vector<grad::Tensor>> log_prob_grads;
  // log pi*, [n, c]
  grad::Tensor log_pi_star;
  // [i] -> grad_x log pi*_i, [n, d]
  std::vector<grad::Tensor> log_pi_star_grads;
};

SoftmaxJets softmax_jets(const Ensemble& ensemble, const grad::Tensor& x);

}  // namespace bvlab::model
