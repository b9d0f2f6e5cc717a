#include "bvlab/grad/finite_difference.hpp"

#include <algorithm>
#include <cmath>

#include "bvlab/common/error.hpp"

namespace bvlab::grad {

Tensor finite_difference_gradient(const ScalarFunction& fn, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  Tensor probe = x;
  Tensor grad = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double origin = x[i];
    probe[i] = origin + h;
    const double up = fn(probe);
    probe[i] = origin - h;
    const double down = fn(probe);
    probe[i] = origin;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite function value at coordinate " + std::to_string(i), i);
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ShapeError("relative error between " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace bvlab::grad
