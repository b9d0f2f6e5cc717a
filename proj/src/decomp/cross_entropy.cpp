#include "bvlab/decomp/cross_entropy.hpp"

#include <cmath>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"

namespace bvlab::decomp {

using grad::Tensor;

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl divergence of vectors of different lengths");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

namespace {

void require_classification(const model::Ensemble& ensemble, const data::LabeledDataset& data) {
  if (ensemble.spec().head != model::Head::softmax) {
    throw ConfigError("cross-entropy decomposition needs a softmax ensemble");
  }
  if (!data.is_classification()) throw ConfigError("cross-entropy decomposition needs labels");
  data.validate();
  for (std::size_t label : data.targets.labels) {
    if (label >= ensemble.spec().output_dim) throw ConfigError("label outside the model's classes");
  }
}

Tensor shifted_inputs(const Tensor& x, const Tensor& beta) {
  if (beta.shape() != x.shape()) {
    throw ShapeError("perturbation shape " + grad::shape_string(beta.shape()) +
                     " does not match the inputs " + grad::shape_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta[i];
  return out;
}

// mean_k sum_i pi*_i (log pi*_i - log p_k,i) for one row.
double variance_kl_row(const std::vector<Tensor>& member_logs, const Tensor& log_star,
                       std::size_t r) {
  const auto ls = log_star.row(r);
  double total = 0.0;
  for (const Tensor& lp : member_logs) {
    const auto row = lp.row(r);
    for (std::size_t i = 0; i < ls.size(); ++i) total += std::exp(ls[i]) * (ls[i] - row[i]);
  }
  return total / static_cast<double>(member_logs.size());
}

}  // namespace

CeReport ce_decompose_with_beta(const model::Ensemble& ensemble,
                                const data::LabeledDataset& data, const Tensor& beta) {
  require_classification(ensemble, data);
  const Tensor& x = data.inputs;
  const Tensor x_adv = shifted_inputs(x, beta);
  const std::size_t n = data.size();
  const std::size_t c = ensemble.spec().output_dim;
  const std::size_t k_count = ensemble.size();
  const double k = static_cast<double>(k_count);
  const auto& labels = data.targets.labels;

  const model::SoftmaxJets jets = model::softmax_jets(ensemble, x);
  std::vector<Tensor> adv_logs;
  for (const model::Model& m : ensemble.members()) {
    adv_logs.push_back(model::log_probabilities(m, x_adv));
  }
  const Tensor adv_log_star = model::kl_mean_log(adv_logs);

  std::vector<double> total(n), bias(n), variance(n), cx(n), cxp(n), cxp_factor(n), p_bias(n),
      p_variance(n);
  std::vector<double> star_slope(c);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t t = labels[r];
    const auto b = beta.row(r);
    const auto ls = jets.log_pi_star.row(r);

    bias[r] = -ls[t];
    variance[r] = variance_kl_row(jets.log_probs, jets.log_pi_star, r);
    for (std::size_t i = 0; i < c; ++i) star_slope[i] = dot(jets.log_pi_star_grads[i].row(r), b);
    cx[r] = -star_slope[t];

    double full = 0.0, factor = 0.0;
    for (std::size_t m = 0; m < k_count; ++m) {
      const auto lp = jets.log_probs[m].row(r);
      for (std::size_t i = 0; i < c; ++i) {
        const double pi = std::exp(ls[i]);
        const double member_slope = dot(jets.log_prob_grads[m][i].row(r), b);
        const double log_ratio = lp[i] - ls[i];
        factor += pi * star_slope[i] * log_ratio;
        full += pi * (star_slope[i] * log_ratio + member_slope - star_slope[i]);
      }
    }
    cxp[r] = -full / k;
    cxp_factor[r] = -factor / k;

    p_bias[r] = -adv_log_star.at(r, t);
    p_variance[r] = variance_kl_row(adv_logs, adv_log_star, r);
    double ce = 0.0;
    for (const Tensor& lp : adv_logs) ce -= lp.at(r, t);
    total[r] = ce / k;
  }

  CeReport report;
  report.total_ce = mean(total);
  report.bias_kl = mean(bias);
  report.variance_kl = mean(variance);
  report.cx_term = mean(cx);
  report.cxprime_term = mean(cxp);
  report.cxprime_factor_term = mean(cxp_factor);
  report.perturbed_bias_kl = mean(p_bias);
  report.perturbed_variance_kl = mean(p_variance);
  report.residual = (report.perturbed_bias_kl + report.perturbed_variance_kl) -
                    (report.bias_kl + report.variance_kl + report.cx_term + report.cxprime_term);
  report.identity_residual =
      report.total_ce - (report.perturbed_bias_kl + report.perturbed_variance_kl);
  const auto level = attack::perturbation_level(x, x_adv);
  report.mse_level = level.mse;
  report.linf_level = level.linf;
  report.points = n;
  report.members = k_count;
  return report;
}

CeReport ce_kl_decompose(const model::Ensemble& ensemble, const data::LabeledDataset& data) {
  return ce_decompose_with_beta(ensemble, data, Tensor::zeros(data.inputs.shape()));
}

CeReport ce_adv_firstorder(const model::Ensemble& ensemble, const data::LabeledDataset& data,
                           const attack::AttackSpec& attack) {
  require_classification(ensemble, data);
  const attack::PerturbationRecord record =
      attack::attack_ensemble(ensemble, data.inputs, data.targets, attack);
  Tensor beta = record.x_adv;
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] -= record.x_clean[i];
  CeReport report = ce_decompose_with_beta(ensemble, data, beta);
  report.degenerate_points = record.degenerate_count();
  if (report.degenerate_points > 0) {
    report.warnings.push_back(std::to_string(report.degenerate_points) +
                              " points had a vanishing attack direction");
  }
  return report;
}

std::vector<double> ce_identity_gaps(const model::Ensemble& ensemble,
                                     const data::LabeledDataset& data) {
  require_classification(ensemble, data);
  std::vector<Tensor> logs;
  for (const model::Model& m : ensemble.members()) {
    logs.push_back(model::log_probabilities(m, data.inputs));
  }
  const Tensor log_star = model::kl_mean_log(logs);
  const double k = static_cast<double>(logs.size());
  std::vector<double> gaps(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const std::size_t t = data.targets.labels[r];
    double lhs = 0.0;
    for (const Tensor& lp : logs) lhs -= lp.at(r, t);
    lhs /= k;
    const double bias = -log_star.at(r, t);
    gaps[r] = std::abs(lhs - bias - variance_kl_row(logs, log_star, r));
  }
  return gaps;
}

ScoreReport softmax_ce_decompose_with_beta(const model::Model& deployed,
                                           const data::LabeledDataset& data, const Tensor& beta) {
  if (deployed.spec().head != model::Head::softmax) {
    throw ConfigError("score-form decomposition needs a softmax model");
  }
  if (!data.is_classification()) throw ConfigError("score-form decomposition needs labels");
  data.validate();
  const Tensor& x = data.inputs;
  const Tensor x_adv = shifted_inputs(x, beta);
  const std::size_t c = deployed.spec().output_dim;
  const auto& labels = data.targets.labels;

  const Tensor clean_logs = model::log_probabilities(deployed, x);
  const Tensor adv_logs = model::log_probabilities(deployed, x_adv);

  ScoreReport report;
  std::vector<double> clean_parts, ci_parts, adv_parts;
  for (std::size_t i = 0; i < c; ++i) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] == i) rows.push_back(r);
    }
    if (rows.empty()) {
      report.skipped_classes.push_back(i);
      report.warnings.push_back("class " + std::to_string(i) + " has no points; skipped");
      continue;
    }
    const Tensor grad_log = model::log_prob_gradient(deployed, data::gather_rows(x, rows), i);
    std::vector<double> clean(rows.size()), ci(rows.size()), adv(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const std::size_t r = rows[j];
      clean[j] = -clean_logs.at(r, i);
      ci[j] = -dot(grad_log.row(j), beta.row(r));
      adv[j] = -adv_logs.at(r, i);
    }
    clean_parts.push_back(mean(clean));
    ci_parts.push_back(mean(ci));
    adv_parts.push_back(mean(adv));
  }
  report.clean_ce = pairwise_sum(clean_parts);
  report.ci_mean = pairwise_sum(ci_parts);
  report.perturbed_ce = pairwise_sum(adv_parts);
  report.residual = report.perturbed_ce - (report.clean_ce + report.ci_mean);
  const auto level = attack::perturbation_level(x, x_adv);
  report.mse_level = level.mse;
  report.linf_level = level.linf;
  return report;
}

ScoreReport softmax_ce_adv_decompose(const model::Model& deployed,
                                     const data::LabeledDataset& data,
                                     const attack::AttackSpec& attack) {
  const attack::PerturbationRecord record =
      attack::attack_model(deployed, data.inputs, data.targets, attack);
  Tensor beta = record.x_adv;
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] -= record.x_clean[i];
  return softmax_ce_decompose_with_beta(deployed, data, beta);
}

}  // namespace bvlab::decomp
