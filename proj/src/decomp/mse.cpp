#include "bvlab/decomp/mse.hpp"

#include <cmath>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"

namespace bvlab::decomp {

using grad::Tensor;

namespace {

void require_regression(const model::Ensemble& ensemble, const data::LabeledDataset& data) {
  if (ensemble.spec().head != model::Head::linear || ensemble.spec().output_dim != 1) {
    throw ConfigError("mse decomposition needs a single-output regression ensemble");
  }
  if (data.is_classification()) throw ConfigError("mse decomposition needs regression targets");
  data.validate();
}

}  // namespace

MseReport mse_decompose_with_beta(const model::Ensemble& ensemble,
                                  const data::LabeledDataset& data, const TargetFn& truth,
                                  double noise_variance, const Tensor& beta) {
  require_regression(ensemble, data);
  if (beta.shape() != data.inputs.shape()) {
    throw ShapeError("perturbation shape " + grad::shape_string(beta.shape()) +
                     " does not match the inputs " + grad::shape_string(data.inputs.shape()));
  }
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  const std::size_t k_count = ensemble.size();
  const double k = static_cast<double>(k_count);

  Tensor x_adv = data.inputs;
  for (std::size_t i = 0; i < x_adv.size(); ++i) x_adv[i] += beta[i];

  std::vector<Tensor> clean(k_count), grads(k_count), shifted(k_count);
  for (std::size_t m = 0; m < k_count; ++m) {
    const model::Model& member = ensemble.member(m);
    clean[m] = model::predict(member, data.inputs);
    grads[m] = model::output_gradient(member, data.inputs);
    shifted[m] = model::predict(member, x_adv);
  }

  std::vector<double> total(n), bias(n), variance(n), clean_target_total(n), cx(n), cxp(n),
      curvature(n), p_bias(n), p_variance(n), point_residual(n);
  std::vector<double> g_bar(d);
  for (std::size_t r = 0; r < n; ++r) {
    const double f = truth(data.inputs.row(r));
    const double y = data.targets.values[r];
    const auto b = beta.row(r);

    double f_bar = 0.0, f_bar_adv = 0.0;
    std::fill(g_bar.begin(), g_bar.end(), 0.0);
    for (std::size_t m = 0; m < k_count; ++m) {
      f_bar += clean[m][r];
      f_bar_adv += shifted[m][r];
      const auto g = grads[m].row(r);
      for (std::size_t j = 0; j < d; ++j) g_bar[j] += g[j];
    }
    f_bar /= k;
    f_bar_adv /= k;
    for (double& v : g_bar) v /= k;

    const double c_x = dot(g_bar, b);
    cx[r] = c_x;
    bias[r] = (f - f_bar - c_x) * (f - f_bar - c_x);
    p_bias[r] = (f - f_bar_adv) * (f - f_bar_adv);

    double var = 0.0, tot = 0.0, tot_clean = 0.0, corr = 0.0, curv = 0.0, p_var = 0.0;
    for (std::size_t m = 0; m < k_count; ++m) {
      const double dev = clean[m][r] - f_bar;
      var += dev * dev;
      const auto g = grads[m].row(r);
      double slope = 0.0;
      for (std::size_t j = 0; j < d; ++j) slope += (g[j] - g_bar[j]) * b[j];
      corr += 2.0 * dev * slope;
      curv += slope * slope;
      tot += (y - shifted[m][r]) * (y - shifted[m][r]);
      tot_clean += (f - shifted[m][r]) * (f - shifted[m][r]);
      p_var += (shifted[m][r] - f_bar_adv) * (shifted[m][r] - f_bar_adv);
    }
    variance[r] = var / k;
    cxp[r] = corr / k;
    curvature[r] = curv / k;
    total[r] = tot / k;
    clean_target_total[r] = tot_clean / k;
    p_variance[r] = p_var / k;
    point_residual[r] = std::abs(clean_target_total[r] - (bias[r] + variance[r] + cxp[r]));
  }

  MseReport report;
  report.total = mean(total);
  report.bias = mean(bias);
  report.variance = mean(variance);
  report.noise = noise_variance;
  report.noise_gap = report.total - mean(clean_target_total) - noise_variance;
  report.cx_mean = mean(cx);
  report.cxprime_mean = mean(cxp);
  report.curvature = mean(curvature);
  report.perturbed_bias = mean(p_bias);
  report.perturbed_variance = mean(p_variance);
  report.residual = report.total - report.noise_gap -
                    (report.bias + report.variance + report.noise + report.cxprime_mean);
  report.linearization_residual = report.residual - report.curvature;
  report.residual_abs_mean = mean(point_residual);
  const auto level = attack::perturbation_level(data.inputs, x_adv);
  report.mse_level = level.mse;
  report.linf_level = level.linf;
  report.points = n;
  report.members = k_count;
  if (k_count < 2) report.warnings.push_back("ensemble of one member: variance term is 0");
  return report;
}

MseReport mse_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                        const TargetFn& truth, double noise_variance) {
  return mse_decompose_with_beta(ensemble, data, truth, noise_variance,
                                 Tensor::zeros(data.inputs.shape()));
}

MseReport mse_adv_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                            const TargetFn& truth, double noise_variance,
                            const attack::AttackSpec& attack) {
  require_regression(ensemble, data);
  const attack::PerturbationRecord record =
      attack::attack_ensemble(ensemble, data.inputs, data.targets, attack);
  Tensor beta = record.x_adv;
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] -= record.x_clean[i];
  MseReport report = mse_decompose_with_beta(ensemble, data, truth, noise_variance, beta);
  report.degenerate_points = record.degenerate_count();
  if (report.degenerate_points > 0) {
    report.warnings.push_back(std::to_string(report.degenerate_points) +
                              " points had a vanishing attack direction");
  }
  return report;
}

std::vector<double> mse_identity_gaps(const model::Ensemble& ensemble,
                                      const data::LabeledDataset& data) {
  require_regression(ensemble, data);
  const std::size_t n = data.size();
  const double k = static_cast<double>(ensemble.size());
  std::vector<Tensor> preds;
  for (const model::Model& m : ensemble.members()) preds.push_back(model::predict(m, data.inputs));
  std::vector<double> gaps(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double y = data.targets.values[r];
    double f_bar = 0.0;
    for (const Tensor& p : preds) f_bar += p[r];
    f_bar /= k;
    double lhs = 0.0, var = 0.0;
    for (const Tensor& p : preds) {
      lhs += (y - p[r]) * (y - p[r]);
      var += (p[r] - f_bar) * (p[r] - f_bar);
    }
    gaps[r] = std::abs(lhs / k - (y - f_bar) * (y - f_bar) - var / k);
  }
  return gaps;
}

}  // namespace bvlab::decomp
