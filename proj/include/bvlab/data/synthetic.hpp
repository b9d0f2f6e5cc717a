#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bvlab/data/dataset.hpp"

namespace bvlab::data {

struct LinearRegressionParams {
  std::size_t n = 1000;
  std::vector<double> weights{2.0, -3.0};
  double intercept = 0.5;
  // Label noise is Uniform(-b, b).
  double noise_halfwidth = 0.5;
  // Inputs are Uniform over [-box, box]^d.
  double box = 1.0;
  std::uint64_t seed = 1;
};

// y = w.x + intercept + gamma. The returned dataset carries the
// noiseless oracle in `truth` and b in `noise_halfwidth`.
LabeledDataset gen_linear_regression(const LinearRegressionParams& params);

struct TwoGaussiansParams {
  std::size_t n = 1000;
  std::size_t dim = 50;
  double mean0 = 0.0;
  double mean1 = 10.0;
  double sd = 1.0;
  std::uint64_t seed = 1;
};

// Balanced two-class sample with i.i.d. N(mean_c, sd^2) coordinates,
// shuffled by the seed. n must be even.
LabeledDataset gen_two_gaussians(const TwoGaussiansParams& params);

}  // namespace bvlab::data
