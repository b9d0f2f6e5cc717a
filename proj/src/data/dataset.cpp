#include "bvlab/data/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"
#include "bvlab/common/rng.hpp"

namespace bvlab::data {

Targets Targets::subset(std::span<const std::size_t> rows) const {
  Targets out;
  out.num_classes = num_classes;
  if (is_classification()) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  } else {
    out.values.reserve(rows.size());
    for (std::size_t r : rows) out.values.push_back(values.at(r));
  }
  return out;
}

double LinearTarget::operator()(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw ShapeError("linear target expects " + std::to_string(weights.size()) +
                     " inputs, got " + std::to_string(x.size()));
  }
  return dot(weights, x) + intercept;
}

void LabeledDataset::validate() const {
  if (inputs.rank() != 2) throw ConfigError("dataset inputs must be an [n, d] matrix");
  if (size() == 0) throw ConfigError("dataset is empty");
  if (targets.size() != size()) {
    throw ConfigError("dataset has " + std::to_string(size()) + " inputs but " +
                      std::to_string(targets.size()) + " targets");
  }
  if (is_classification()) {
    for (std::size_t i = 0; i < targets.labels.size(); ++i) {
      if (targets.labels[i] >= targets.num_classes) {
        throw ConfigError("label " + std::to_string(targets.labels[i]) + " at row " +
                          std::to_string(i) + " outside [0, " +
                          std::to_string(targets.num_classes) + ")");
      }
    }
  }
}

grad::Tensor gather_rows(const grad::Tensor& matrix, std::span<const std::size_t> rows) {
  const std::size_t cols = matrix.cols();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (std::size_t r : rows) {
    const auto row = matrix.row(r);
    values.insert(values.end(), row.begin(), row.end());
  }
  return grad::Tensor::matrix(rows.size(), cols, std::move(values));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.inputs = gather_rows(inputs, rows);
  out.targets = targets.subset(rows);
  out.provenance = provenance;
  out.noise_halfwidth = noise_halfwidth;
  out.truth = truth;
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset,
                                                double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, 0x5e11);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(dataset.size()) * test_fraction));
  if (n_test == 0 || n_test == dataset.size()) {
    throw ConfigError("split of " + std::to_string(dataset.size()) +
                      " rows leaves one side empty");
  }
  const std::span<const std::size_t> all(order);
  LabeledDataset train = dataset.subset(all.subspan(n_test));
  LabeledDataset test = dataset.subset(all.first(n_test));
  train.provenance += "|split-train(seed=" + std::to_string(seed) + ")";
  test.provenance += "|split-test(seed=" + std::to_string(seed) + ")";
  return {std::move(train), std::move(test)};
}

void write_csv(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (std::size_t c = 0; c < dataset.dim(); ++c) out << "x_" << c << ",";
  out << "target\n";
  char buffer[64];
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (double v : dataset.inputs.row(r)) {
      std::snprintf(buffer, sizeof buffer, "%.17g,", v);
      out << buffer;
    }
    if (dataset.is_classification()) {
      out << dataset.targets.labels[r] << "\n";
    } else {
      std::snprintf(buffer, sizeof buffer, "%.17g\n", dataset.targets.values[r]);
      out << buffer;
    }
  }
  if (!out) throw Error("failed writing " + path);
}

Standardizer Standardizer::fit(const grad::Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.rows() == 0) throw ShapeError("standardizer needs a non-empty [n, d] batch");
  const std::size_t n = inputs.rows(), d = inputs.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t r = 0; r < n; ++r) column[r] = inputs.at(r, j);
    s.mean[j] = bvlab::mean(column);
    const double sd = std::sqrt(population_variance(column));
    if (sd > 0.0) s.scale[j] = sd;
  }
  return s;
}

grad::Tensor Standardizer::apply(const grad::Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.cols() != mean.size()) {
    throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                     " columns applied to " + grad::shape_string(inputs.shape()));
  }
  grad::Tensor out = inputs;
  const std::size_t d = mean.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % d]) / scale[i % d];
  return out;
}

LabeledDataset Standardizer::apply(const LabeledDataset& dataset) const {
  LabeledDataset out = dataset;
  out.inputs = apply(dataset.inputs);
  out.truth.reset();
  out.provenance += " standardized";
  return out;
}

}  // namespace bvlab::data
