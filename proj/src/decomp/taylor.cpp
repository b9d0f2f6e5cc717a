#include "bvlab/decomp/taylor.hpp"

#include <cmath>

#include "bvlab/common/error.hpp"

namespace bvlab::decomp {

using grad::Tensor;

TaylorScan taylor_residual_scan(const std::function<double(double)>& residual_at,
                                const std::vector<double>& epsilons) {
  if (epsilons.size() < 4) throw ConfigError("residual scan needs at least 4 epsilons");
  for (double e : epsilons) {
    if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("residual scan epsilons must be positive");
  }
  const double ratio = epsilons[1] / epsilons[0];
  if (std::abs(ratio - 1.0) < 1e-12) throw ConfigError("residual scan epsilons must differ");
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    const double r = epsilons[i] / epsilons[i - 1];
    if (std::abs(r - ratio) > 1e-9 * std::abs(ratio)) {
      throw ConfigError("residual scan epsilons must form a geometric grid");
    }
  }

  TaylorScan scan;
  scan.epsilons = epsilons;
  std::vector<double> lx, ly;
  for (double e : epsilons) {
    const double r = residual_at(e);
    if (!std::isfinite(r)) throw NumericError("non-finite residual in scan", scan.residuals.size());
    scan.residuals.push_back(r);
    const bool keep = std::abs(r) >= kResidualFloor;
    scan.used.push_back(keep);
    if (keep) {
      lx.push_back(std::log(e));
      ly.push_back(std::log(std::abs(r)));
    } else {
      scan.notes.push_back("eps " + std::to_string(e) + ": residual at noise floor, excluded");
    }
  }
  if (lx.empty()) {
    scan.exact = true;
    scan.notes.push_back("exact: every residual at the noise floor");
    return scan;
  }
  if (lx.size() < 2) {
    scan.notes.push_back("fewer than two usable points; slope not fitted");
    return scan;
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  scan.slope = sxy / sxx;
  scan.intercept = my - scan.slope * mx;
  return scan;
}

namespace {

// Hidden pre-activations, one [n, width] tensor per hidden layer.
std::vector<Tensor> hidden_preactivations(const model::Model& model, const Tensor& x) {
  std::vector<Tensor> out;
  const auto& layers = model.layers();
  const bool relu = model.spec().activation == model::Activation::relu;
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const Tensor& w = layers[l].weight;
    const Tensor& b = layers[l].bias;
    const std::size_t n = h.rows(), fin = w.rows(), fout = w.cols();
    Tensor z = Tensor::zeros({n, fout});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < fout; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < fin; ++i) acc += h.at(r, i) * w.at(i, j);
        z[r * fout + j] = acc;
      }
    }
    out.push_back(z);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = relu ? (z[i] > 0.0 ? z[i] : 0.0) : 1.0 / (1.0 + std::exp(-z[i]));
    }
    h = std::move(z);
  }
  return out;
}

}  // namespace

std::vector<bool> activation_flips(const model::Model& model, const Tensor& x,
                                   const Tensor& x_adv) {
  if (x.shape() != x_adv.shape()) throw ShapeError("flip check on mismatched batches");
  std::vector<bool> flips(x.rows(), false);
  if (model.spec().activation != model::Activation::relu) return flips;
  const auto clean = hidden_preactivations(model, x);
  const auto adv = hidden_preactivations(model, x_adv);
  for (std::size_t l = 0; l < clean.size(); ++l) {
    const std::size_t width = clean[l].cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t j = 0; j < width && !flips[r]; ++j) {
        if ((clean[l][r * width + j] > 0.0) != (adv[l][r * width + j] > 0.0)) flips[r] = true;
      }
    }
  }
  return flips;
}

std::vector<std::size_t> flip_free_rows(const model::Ensemble& ensemble, const Tensor& x,
                                        const std::vector<Tensor>& perturbed) {
  std::vector<bool> bad(x.rows(), false);
  for (const model::Model& m : ensemble.members()) {
    for (const Tensor& xa : perturbed) {
      const auto f = activation_flips(m, x, xa);
      for (std::size_t r = 0; r < f.size(); ++r) bad[r] = bad[r] || f[r];
    }
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < bad.size(); ++r) {
    if (!bad[r]) rows.push_back(r);
  }
  return rows;
}

}  // namespace bvlab::decomp
