#pragma once

#include <functional>

#include "bvlab/grad/tensor.hpp"

namespace bvlab::grad {

using ScalarFunction = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate. Throws NumericError carrying the coordinate when an
// evaluation is not finite.
Tensor finite_difference_gradient(const ScalarFunction& fn, const Tensor& x, double h = 1e-4);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps
// coordinates where both gradients vanish from dominating.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace bvlab::grad
