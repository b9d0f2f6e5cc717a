#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/data/dataset.hpp"
#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::attack {

struct PerturbationRecord {
  grad::Tensor x_clean;
  grad::Tensor x_adv;
  // mean((x_adv - x_clean)^2) over every coordinate of the batch.
  double mse_level = 0.0;
  // max |x_adv - x_clean|.
  double linf_level = 0.0;
  // Rows whose attack direction vanished; those rows are left unchanged.
  std::vector<bool> degenerate;

  std::size_t degenerate_count() const;
};

struct PerturbationLevel {
  double mse = 0.0;
  double linf = 0.0;
};

PerturbationLevel perturbation_level(const grad::Tensor& x, const grad::Tensor& x_adv);

// x + eps * sign(grad_x L), clamped. L is the model's natural loss.
PerturbationRecord fgsm(const model::Model& model, const grad::Tensor& x,
                        const data::Targets& y, const AttackSpec& spec);

// `steps` signed ascent steps, each followed by projection onto the
// eps-ball around x and then the clamp range. No random start.
PerturbationRecord pgd(const model::Model& model, const grad::Tensor& x,
                       const data::Targets& y, const AttackSpec& spec);

// One unsigned step x + eps * S^T V, where row i of S is
// -grad_x log(p_i) and V is the one-hot label.
PerturbationRecord bv_attack(const model::Model& model, const grad::Tensor& x,
                             const data::Targets& y, const AttackSpec& spec);

// beta = -eps * grad f_bar / ||grad f_bar||_2 per row.
PerturbationRecord bias_direction_attack(const model::Ensemble& ensemble, const grad::Tensor& x,
                                         const AttackSpec& spec);

// beta = eps * d / ||d||_2 with d = (f_hat - f_bar)(grad f_hat - grad f_bar),
// f_hat being the deployed model.
PerturbationRecord variance_direction_attack(const model::Ensemble& ensemble,
                                             const model::Model& deployed,
                                             const grad::Tensor& x, const AttackSpec& spec);

// Dispatch for attacks that need only one model (none, fgsm, pgd, bv).
PerturbationRecord attack_model(const model::Model& model, const grad::Tensor& x,
                                const data::Targets& y, const AttackSpec& spec);

// Dispatch for every kind; single-model attacks target
// ensemble.member(spec.deployed).
PerturbationRecord attack_ensemble(const model::Ensemble& ensemble, const grad::Tensor& x,
                                   const data::Targets& y, const AttackSpec& spec);

}  // namespace bvlab::attack
