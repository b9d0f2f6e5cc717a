#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::decomp {

// Residuals with magnitude below this are treated as rounding noise.
inline constexpr double kResidualFloor = 1e-13;

struct TaylorScan {
  std::vector<double> epsilons;
  std::vector<double> residuals;
  // false where |residual| fell under the floor.
  std::vector<bool> used;
  // Least-squares slope of log|r| against log eps over the used points.
  double slope = 0.0;
  double intercept = 0.0;
  // Every residual was at the floor; slope is meaningless.
  bool exact = false;
  std::vector<std::string> notes;
};

// Evaluates residual_at(eps) on a geometric grid of at least four values
// and fits the log-log slope.
TaylorScan taylor_residual_scan(const std::function<double(double)>& residual_at,
                                const std::vector<double>& epsilons);

// Rows of x for which some hidden ReLU unit of `model` changes side of
// zero between x and x_adv. Always all-false for sigmoid models.
std::vector<bool> activation_flips(const model::Model& model, const grad::Tensor& x,
                                   const grad::Tensor& x_adv);

// Indices of rows with no flip in any member for any of the perturbed
// batches.
std::vector<std::size_t> flip_free_rows(const model::Ensemble& ensemble, const grad::Tensor& x,
                                        const std::vector<grad::Tensor>& perturbed);

}  // namespace bvlab::decomp
