#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/data/dataset.hpp"
#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::decomp {

double kl_divergence(std::span<const double> p, std::span<const double> q);

// Cross-entropy of a softmax ensemble against one-hot labels, split into
// KL(pi || pi*) (bias) and mean_k KL(pi* || pi_k) (variance), where pi* is
// the normalized geometric mean of member probabilities.
struct CeReport {
  // mean_{x,k} -log pi_k,t(x + beta)
  double total_ce = 0.0;
  // Clean bias and variance.
  double bias_kl = 0.0;
  double variance_kl = 0.0;
  // mean_x -(grad log pi*_t) . beta
  double cx_term = 0.0;
  // mean_{x,k} -sum_i grad[pi*_i log(pi_k,i / pi*_i)] . beta; the exact
  // first-order change of the variance term.
  double cxprime_term = 0.0;
  // mean_{x,k} -sum_i (grad pi*_i) log(pi_k,i / pi*_i) . beta; only the
  // pi* factor differentiated. Vanishes identically for the geometric-mean
  // pi* because sum_i grad pi*_i = 0 and log(pi_k,i / pi*_i) averages to
  // log Z for every class.
  double cxprime_factor_term = 0.0;
  // Exact split at x + beta (members and pi* recomputed there).
  double perturbed_bias_kl = 0.0;
  double perturbed_variance_kl = 0.0;
  // (perturbed_bias_kl + perturbed_variance_kl)
  //   - (bias_kl + variance_kl + cx_term + cxprime_term)
  double residual = 0.0;
  // total_ce - (perturbed_bias_kl + perturbed_variance_kl); zero up to
  // rounding by the KL Pythagorean identity.
  double identity_residual = 0.0;

  double mse_level = 0.0;
  double linf_level = 0.0;
  std::size_t points = 0;
  std::size_t members = 0;
  std::size_t degenerate_points = 0;
  std::vector<std::string> warnings;
};

CeReport ce_kl_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data);

// beta(x) comes from `attack` (single-model kinds target member
// attack.deployed) and is shared by all members.
CeReport ce_adv_firstorder(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                           const attack::AttackSpec& attack);

CeReport ce_decompose_with_beta(const model::Ensemble& ensemble,
                                const data::LabeledDataset& data, const grad::Tensor& beta);

// Per-point |mean_k KL(pi || pi_k) - KL(pi || pi*) - mean_k KL(pi* || pi_k)|.
std::vector<double> ce_identity_gaps(const model::Ensemble& ensemble,
                                     const data::LabeledDataset& data);

// Loss of one softmax model in score form: for each class i, the mean
// over points labelled i of -log(f_i / sum_j f_j), summed over classes.
struct ScoreReport {
  double clean_ce = 0.0;
  // sum_i mean_{x in X_i} -grad log(f_i / sum_j f_j) . beta
  double ci_mean = 0.0;
  double perturbed_ce = 0.0;
  // perturbed_ce - (clean_ce + ci_mean)
  double residual = 0.0;

  double mse_level = 0.0;
  double linf_level = 0.0;
  std::vector<std::size_t> skipped_classes;
  std::vector<std::string> warnings;
};

ScoreReport softmax_ce_adv_decompose(const model::Model& deployed,
                                     const data::LabeledDataset& data,
                                     const attack::AttackSpec& attack);

ScoreReport softmax_ce_decompose_with_beta(const model::Model& deployed,
                                           const data::LabeledDataset& data,
                                           const grad::Tensor& beta);

}  // namespace bvlab::decomp
