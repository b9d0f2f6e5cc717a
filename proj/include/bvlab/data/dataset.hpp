#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bvlab/grad/tensor.hpp"

namespace bvlab::data {

// Supervision for a batch: either real-valued targets (regression) or
// class indices (classification). Exactly one of the two is populated.
struct Targets {
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  bool is_classification() const noexcept { return num_classes > 0; }
  std::size_t size() const noexcept { return is_classification() ? labels.size() : values.size(); }

  Targets subset(std::span<const std::size_t> rows) const;
};

// f(x) = w.x + intercept, the noiseless regression oracle.
struct LinearTarget {
  std::vector<double> weights;
  double intercept = 0.0;

  double operator()(std::span<const double> x) const;
};

struct LabeledDataset {
  grad::Tensor inputs;  // [n, d]
  Targets targets;
  std::string provenance;
  // Half-width b of Uniform(-b, b) label noise; regression only.
  double noise_halfwidth = 0.0;
  std::optional<LinearTarget> truth;

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  bool is_classification() const noexcept { return targets.is_classification(); }

  // b^2 / 3 for the uniform noise model.
  double noise_variance() const noexcept { return noise_halfwidth * noise_halfwidth / 3.0; }

  // Throws ConfigError if the invariants (n >= 1, label range, sizes) fail.
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

grad::Tensor gather_rows(const grad::Tensor& matrix, std::span<const std::size_t> rows);

// Seeded shuffle followed by a split; the test side gets
// round(n * test_fraction) rows.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset,
                                                double test_fraction, std::uint64_t seed);

// Header x_0..x_{d-1},target; values with 17 significant digits.
void write_csv(const LabeledDataset& dataset, const std::string& path);

// Per-coordinate affine map x -> (x - mean) / scale, fitted on one set
// and applied to others. Zero-spread coordinates keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const grad::Tensor& inputs);
  grad::Tensor apply(const grad::Tensor& inputs) const;
  LabeledDataset apply(const LabeledDataset& dataset) const;
};

}  // namespace bvlab::data
