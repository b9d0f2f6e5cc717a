#include "bvlab/common/numeric.hpp"

#include <cmath>

namespace bvlab {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double total = 0.0;
    for (double v : values) total += v;
    return total;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values) / static_cast<double>(values.size());
}

namespace {
double sum_squared_deviation(std::span<const double> values) {
  const double m = mean(values);
  double total = 0.0;
  for (double v : values) total += (v - m) * (v - m);
  return total;
}
}  // namespace

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return sum_squared_deviation(values) / static_cast<double>(values.size() - 1);
}

double population_variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return sum_squared_deviation(values) / static_cast<double>(values.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * b[i];
  return total;
}

double l2_norm(std::span<const double> values) { return std::sqrt(dot(values, values)); }

}  // namespace bvlab
