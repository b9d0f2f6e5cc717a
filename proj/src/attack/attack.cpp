#include "bvlab/attack/attack.hpp"

#include <algorithm>
#include <cmath>

#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"

namespace bvlab::attack {

using grad::Tensor;

namespace {

constexpr double kDegenerateNorm = 1e-12;

void require_kind(const AttackSpec& spec, AttackKind kind) {
  spec.validate();
  if (spec.kind != kind) {
    throw ConfigError("attack spec of kind '" + std::string(to_string(spec.kind)) +
                      "' passed to the " + std::string(to_string(kind)) + " attack");
  }
}

void apply_clamp(Tensor& x, const std::optional<ClampRange>& clamp) {
  if (!clamp) return;
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = i % cols;
    x[i] = std::clamp(x[i], clamp->lower_at(c), clamp->upper_at(c));
  }
}

// Pulls v onto [x - r, x + r] as measured by the rounded difference v - x.
double into_ball(double x, double v, double r) {
  v = std::clamp(v, x - r, x + r);
  while (v - x > r) v = std::nextafter(v, x);
  while (x - v > r) v = std::nextafter(v, x);
  return v;
}

// x + beta with beta capped at the l-inf bound, then clamped.
PerturbationRecord finish(const Tensor& x, const Tensor& beta, const AttackSpec& spec,
                          std::vector<bool> degenerate, std::optional<double> radius = {}) {
  if (spec.linf_bound) radius = radius ? std::min(*radius, *spec.linf_bound) : *spec.linf_bound;
  Tensor x_adv = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x_adv[i] = radius ? into_ball(x[i], x[i] + beta[i], *radius) : x[i] + beta[i];
  }
  apply_clamp(x_adv, spec.clamp);
  PerturbationRecord record;
  const PerturbationLevel level = perturbation_level(x, x_adv);
  record.x_clean = x;
  record.x_adv = std::move(x_adv);
  record.mse_level = level.mse;
  record.linf_level = level.linf;
  record.degenerate = std::move(degenerate);
  return record;
}

std::vector<bool> zero_rows(const Tensor& g) {
  std::vector<bool> flags(g.rows());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const auto row = g.row(r);
    flags[r] = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
  }
  return flags;
}

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 1) return Tensor::matrix(1, x.size(), x.data());
  throw ShapeError("attack inputs must be [d] or [n, d], got " + grad::shape_string(x.shape()));
}

// Scales each row of `direction` to l2 norm eps; rows with norm below the
// degeneracy threshold become zero and are flagged.
Tensor unit_rows(Tensor direction, double eps, std::vector<bool>& degenerate) {
  degenerate.assign(direction.rows(), false);
  for (std::size_t r = 0; r < direction.rows(); ++r) {
    auto row = direction.row(r);
    const double norm = l2_norm(row);
    if (norm < kDegenerateNorm) {
      degenerate[r] = true;
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    for (double& v : row) v = eps * v / norm;
  }
  return direction;
}

}  // namespace

std::size_t PerturbationRecord::degenerate_count() const {
  return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), true));
}

PerturbationLevel perturbation_level(const Tensor& x, const Tensor& x_adv) {
  if (x.shape() != x_adv.shape()) {
    throw ShapeError("perturbation level of " + grad::shape_string(x.shape()) + " vs " +
                     grad::shape_string(x_adv.shape()));
  }
  std::vector<double> squares(x.size());
  double linf = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x_adv[i] - x[i];
    squares[i] = diff * diff;
    linf = std::max(linf, std::abs(diff));
  }
  return {mean(squares), linf};
}

PerturbationRecord fgsm(const model::Model& model, const Tensor& x, const data::Targets& y,
                        const AttackSpec& spec) {
  require_kind(spec, AttackKind::fgsm);
  const Tensor batch = as_batch(x);
  const Tensor g = model::input_gradient(model, batch, y, model.spec().natural_loss());
  Tensor beta = g;
  for (double& v : beta.values()) v = spec.epsilon * sign(v);
  return finish(batch, beta, spec, zero_rows(g), spec.epsilon);
}

PerturbationRecord pgd(const model::Model& model, const Tensor& x, const data::Targets& y,
                       const AttackSpec& spec) {
  require_kind(spec, AttackKind::pgd);
  const Tensor batch = as_batch(x);
  const double step = spec.effective_step_size();
  const double radius =
      spec.linf_bound ? std::min(spec.epsilon, *spec.linf_bound) : spec.epsilon;
  Tensor current = batch;
  std::vector<bool> degenerate;
  for (std::size_t t = 0; t < spec.steps; ++t) {
    const Tensor g = model::input_gradient(model, current, y, model.spec().natural_loss());
    if (t == 0) degenerate = zero_rows(g);
    for (std::size_t i = 0; i < current.size(); ++i) {
      const double moved = current[i] + step * sign(g[i]);
      current[i] = into_ball(batch[i], moved, radius);
    }
    apply_clamp(current, spec.clamp);
  }
  PerturbationRecord record;
  const PerturbationLevel level = perturbation_level(batch, current);
  record.x_clean = batch;
  record.x_adv = std::move(current);
  record.mse_level = level.mse;
  record.linf_level = level.linf;
  record.degenerate = std::move(degenerate);
  return record;
}

PerturbationRecord bv_attack(const model::Model& model, const Tensor& x, const data::Targets& y,
                             const AttackSpec& spec) {
  require_kind(spec, AttackKind::bv);
  if (model.spec().head != model::Head::softmax) {
    throw ConfigError("the bv attack needs a softmax classifier");
  }
  const Tensor batch = as_batch(x);
  const std::size_t classes = model.spec().output_dim;
  if (y.labels.size() != batch.rows()) throw ShapeError("bv attack needs one label per row");
  for (std::size_t label : y.labels) {
    if (label >= classes) {
      throw ConfigError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(classes) + " classes");
    }
  }
  // Score matrix S, one row (per input) for each class.
  std::vector<Tensor> scores;
  scores.reserve(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    Tensor s = model::log_prob_gradient(model, batch, i);
    for (double& v : s.values()) v = -v;
    scores.push_back(std::move(s));
  }
  Tensor direction = Tensor::zeros(batch.shape());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto out = direction.row(r);
    for (std::size_t i = 0; i < classes; ++i) {
      const double one_hot = y.labels[r] == i ? 1.0 : 0.0;
      const auto s = scores[i].row(r);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += s[j] * one_hot;
    }
  }
  Tensor beta = direction;
  for (double& v : beta.values()) v *= spec.epsilon;
  return finish(batch, beta, spec, zero_rows(direction));
}

PerturbationRecord bias_direction_attack(const model::Ensemble& ensemble, const Tensor& x,
                                         const AttackSpec& spec) {
  require_kind(spec, AttackKind::bias_dir);
  const Tensor batch = as_batch(x);
  Tensor direction = model::ensemble_mean_gradient(ensemble, batch);
  for (double& v : direction.values()) v = -v;
  std::vector<bool> degenerate;
  const Tensor beta = unit_rows(std::move(direction), spec.epsilon, degenerate);
  return finish(batch, beta, spec, std::move(degenerate));
}

PerturbationRecord variance_direction_attack(const model::Ensemble& ensemble,
                                             const model::Model& deployed, const Tensor& x,
                                             const AttackSpec& spec) {
  require_kind(spec, AttackKind::var_dir);
  if (!(deployed.spec() == ensemble.spec())) {
    throw ConfigError("the deployed model must share the ensemble's spec");
  }
  const Tensor batch = as_batch(x);
  const Tensor f_hat = model::predict(deployed, batch);
  const Tensor f_bar = model::ensemble_mean(ensemble, batch);
  const Tensor g_hat = model::output_gradient(deployed, batch);
  const Tensor g_bar = model::ensemble_mean_gradient(ensemble, batch);
  Tensor direction = Tensor::zeros(batch.shape());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const double deviation = f_hat[r] - f_bar[r];
    auto out = direction.row(r);
    const auto gh = g_hat.row(r);
    const auto gb = g_bar.row(r);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = deviation * (gh[j] - gb[j]);
  }
  std::vector<bool> degenerate;
  const Tensor beta = unit_rows(std::move(direction), spec.epsilon, degenerate);
  return finish(batch, beta, spec, std::move(degenerate));
}

PerturbationRecord attack_model(const model::Model& model, const Tensor& x,
                                const data::Targets& y, const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::none: {
      spec.validate();
      const Tensor batch = as_batch(x);
      return finish(batch, Tensor::zeros(batch.shape()), spec,
                    std::vector<bool>(batch.rows(), false));
    }
    case AttackKind::fgsm: return fgsm(model, x, y, spec);
    case AttackKind::pgd: return pgd(model, x, y, spec);
    case AttackKind::bv: return bv_attack(model, x, y, spec);
    case AttackKind::bias_dir:
    case AttackKind::var_dir:
      break;
  }
  throw ConfigError("attack '" + std::string(to_string(spec.kind)) + "' needs an ensemble");
}

PerturbationRecord attack_ensemble(const model::Ensemble& ensemble, const Tensor& x,
                                   const data::Targets& y, const AttackSpec& spec) {
  if (spec.deployed >= ensemble.size()) {
    throw ConfigError("deployed member " + std::to_string(spec.deployed) + " outside ensemble of " +
                      std::to_string(ensemble.size()));
  }
  switch (spec.kind) {
    case AttackKind::bias_dir: return bias_direction_attack(ensemble, x, spec);
    case AttackKind::var_dir:
      return variance_direction_attack(ensemble, ensemble.member(spec.deployed), x, spec);
    default: return attack_model(ensemble.member(spec.deployed), x, y, spec);
  }
}

}  // namespace bvlab::attack
