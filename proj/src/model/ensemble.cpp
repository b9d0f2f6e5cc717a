#include "bvlab/model/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "bvlab/common/error.hpp"

namespace bvlab::model {

using grad::Tensor;

Ensemble::Ensemble(std::vector<Model> members) : members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("an ensemble needs at least one member");
  for (const Model& m : members_) {
    if (!(m.spec() == members_.front().spec())) {
      throw ConfigError("ensemble members must share one model spec");
    }
  }
}

namespace {
void require_regression(const Ensemble& ensemble) {
  if (ensemble.spec().head != Head::linear || ensemble.spec().output_dim != 1) {
    throw ConfigError("operation needs a single-output regression ensemble");
  }
}

void require_softmax(const Ensemble& ensemble) {
  if (ensemble.spec().head != Head::softmax) {
    throw ConfigError("operation needs a softmax ensemble");
  }
}
}  // namespace

Tensor ensemble_mean(const Ensemble& ensemble, const Tensor& x) {
  require_regression(ensemble);
  const double k = static_cast<double>(ensemble.size());
  std::vector<double> total;
  for (const Model& m : ensemble.members()) {
    const Tensor p = predict(m, x);
    if (total.empty()) total.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) total[i] += p[i];
  }
  for (double& v : total) v /= k;
  return Tensor::vector(std::move(total));
}

Tensor ensemble_mean_gradient(const Ensemble& ensemble, const Tensor& x) {
  require_regression(ensemble);
  const double k = static_cast<double>(ensemble.size());
  Tensor total = Tensor::zeros(x.shape());
  for (const Model& m : ensemble.members()) {
    const Tensor g = output_gradient(m, x);
    for (std::size_t i = 0; i < g.size(); ++i) total[i] += g[i];
  }
  for (double& v : total.values()) v /= k;
  return total;
}

Tensor kl_mean_log(const std::vector<Tensor>& member_log_probs) {
  if (member_log_probs.empty()) throw ConfigError("kl mean of zero members");
  const Tensor& first = member_log_probs.front();
  // A single member is already normalized.
  if (member_log_probs.size() == 1) return first;
  const double k = static_cast<double>(member_log_probs.size());
  Tensor out = Tensor::zeros(first.shape());
  for (const Tensor& lp : member_log_probs) {
    if (lp.shape() != first.shape()) throw ShapeError("member log-probabilities differ in shape");
    for (std::size_t i = 0; i < lp.size(); ++i) out[i] += lp[i];
  }
  for (double& v : out.values()) v /= k;
  // Renormalize each row in the log domain.
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const auto top = std::max_element(row.begin(), row.end());
    const double peak = *top;
    double rest = 0.0;
    for (auto it = row.begin(); it != row.end(); ++it) {
      if (it != top) rest += std::exp(*it - peak);
    }
    const double lse = peak + std::log1p(rest);
    for (double& v : row) v -= lse;
  }
  return out;
}

Tensor kl_mean(const Ensemble& ensemble, const Tensor& x) {
  require_softmax(ensemble);
  std::vector<Tensor> logs;
  logs.reserve(ensemble.size());
  for (const Model& m : ensemble.members()) logs.push_back(log_probabilities(m, x));
  Tensor out = kl_mean_log(logs);
  for (double& v : out.values()) v = std::exp(v);
  return out;
}

SoftmaxJets softmax_jets(const Ensemble& ensemble, const Tensor& x) {
  require_softmax(ensemble);
  const std::size_t c = ensemble.spec().output_dim;
  const std::size_t k = ensemble.size();
  SoftmaxJets jets;
  for (const Model& m : ensemble.members()) {
    jets.log_probs.push_back(log_probabilities(m, x));
    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < c; ++i) grads.push_back(log_prob_gradient(m, x, i));
    jets.log_prob_grads.push_back(std::move(grads));
  }
  jets.log_pi_star = kl_mean_log(jets.log_probs);
  if (k == 1) {
    jets.log_pi_star_grads = jets.log_prob_grads.front();
    return jets;
  }

  // log pi*_i = m_i - log Z with m_i = mean_k log p_{k,i}, so
  // grad log pi*_i = grad m_i - sum_j pi*_j grad m_j.
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<Tensor> mean_grads(c, Tensor::zeros({n, d}));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      const Tensor& g = jets.log_prob_grads[m][i];
      for (std::size_t e = 0; e < g.size(); ++e) mean_grads[i][e] += g[e];
    }
    for (double& v : mean_grads[i].values()) v /= static_cast<double>(k);
  }
  Tensor log_z_grad = Tensor::zeros({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < c; ++i) {
      const double weight = std::exp(jets.log_pi_star.at(r, i));
      const auto src = mean_grads[i].row(r);
      auto dst = log_z_grad.row(r);
      for (std::size_t j = 0; j < d; ++j) dst[j] += weight * src[j];
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    Tensor g = mean_grads[i];
    for (std::size_t e = 0; e < g.size(); ++e) g[e] -= log_z_grad[e];
    jets.log_pi_star_grads.push_back(std::move(g));
  }
  return jets;
}

}  // namespace bvlab::model
