#pragma once

#include <cstdint>
#include <vector>

#include "bvlab/grad/tensor.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::testing {

// Affine model: a single layer with the given [d, out] weights and bias.
inline model::Model affine_model(std::size_t d, std::size_t out, std::vector<double> weights,
                                 std::vector<double> bias, model::Head head = model::Head::linear,
                                 std::uint64_t seed = 0) {
  model::MlpSpec spec{d, {}, out, model::Activation::sigmoid, head};
  model::Layer layer{grad::Tensor::matrix(d, out, std::move(weights)),
                     grad::Tensor::vector(std::move(bias))};
  return model::Model(spec, {layer}, seed);
}

// Regression model returning the constant c.
inline model::Model constant_model(std::size_t d, double c) {
  return affine_model(d, 1, std::vector<double>(d, 0.0), {c});
}

inline grad::Tensor row_tensor(std::span<const double> row) {
  return grad::Tensor::vector({row.begin(), row.end()});
}

}  // namespace bvlab::testing
