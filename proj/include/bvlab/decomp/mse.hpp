#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/data/dataset.hpp"
#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/ensemble.hpp"

namespace bvlab::decomp {

using TargetFn = std::function<double(std::span<const double>)>;

// Squared-error loss of an ensemble split into bias, variance and noise,
// with the first-order corrections for a perturbation beta(x).
//
// Expectations are equal-weight means over test points and members. The
// noiseless target f comes from the oracle; y carries the noise.
struct MseReport {
  // mean_{x,k} (y - f_k(x + beta))^2
  double total = 0.0;
  // mean_x (f - f_bar - c_x)^2; with beta = 0 this is the clean bias.
  double bias = 0.0;
  // mean_{x,k} (f_k - f_bar)^2 at the clean input.
  double variance = 0.0;
  // sigma^2 supplied analytically.
  double noise = 0.0;
  // Finite-sample deviation of the noise contribution:
  // total - mean_{x,k} (f - f_k(x + beta))^2 - noise.
  double noise_gap = 0.0;
  // mean_x grad f_bar . beta
  double cx_mean = 0.0;
  // mean_{x,k} 2 (f_k - f_bar) (grad f_k - grad f_bar) . beta
  double cxprime_mean = 0.0;
  // mean_{x,k} ((grad f_k - grad f_bar) . beta)^2, the square of the
  // linear term that the first-order variance expansion leaves out.
  double curvature = 0.0;
  // total - noise_gap - (bias + variance + noise + cxprime_mean)
  double residual = 0.0;
  // residual - curvature; zero when every member is affine.
  double linearization_residual = 0.0;
  // mean_x |residual at x|; no cancellation between points.
  double residual_abs_mean = 0.0;

  // Exact split at x + beta: mean_x (f - f_bar(x+beta))^2 and
  // mean_{x,k} (f_k(x+beta) - f_bar(x+beta))^2.
  double perturbed_bias = 0.0;
  double perturbed_variance = 0.0;

  double mse_level = 0.0;
  double linf_level = 0.0;
  std::size_t points = 0;
  std::size_t members = 0;
  std::size_t degenerate_points = 0;
  std::vector<std::string> warnings;
};

// Clean decomposition (beta = 0).
MseReport mse_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                        const TargetFn& truth, double noise_variance);

// Perturbed decomposition. beta(x) is produced once per point by `attack`
// (single-model kinds target member attack.deployed) and shared by all
// members, assuming f(x + beta) = f(x).
MseReport mse_adv_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                            const TargetFn& truth, double noise_variance,
                            const attack::AttackSpec& attack);

// Same, with beta supplied directly as an [n, d] tensor.
MseReport mse_decompose_with_beta(const model::Ensemble& ensemble,
                                  const data::LabeledDataset& data, const TargetFn& truth,
                                  double noise_variance, const grad::Tensor& beta);

// Per-point |mean_k (y - f_k)^2 - (y - f_bar)^2 - mean_k (f_k - f_bar)^2|.
std::vector<double> mse_identity_gaps(const model::Ensemble& ensemble,
                                      const data::LabeledDataset& data);

}  // namespace bvlab::decomp
