#pragma once

#include <cstddef>
#include <span>

namespace bvlab {

// Fixed-order pairwise summation; the result depends only on the input
// order, never on how work was scheduled.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

// Unbiased (n - 1) sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> values);

// Population (n) variance.
double population_variance(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> values);

// sign(0) = 0.
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace bvlab
