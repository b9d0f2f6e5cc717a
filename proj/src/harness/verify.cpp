#include "bvlab/harness/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/rng.hpp"
#include "bvlab/decomp/cross_entropy.hpp"
#include "bvlab/decomp/mse.hpp"
#include "bvlab/grad/finite_difference.hpp"
#include "bvlab/harness/experiment.hpp"
#include "bvlab/model/serialize.hpp"

namespace bvlab::harness {

using attack::AttackKind;
using attack::AttackSpec;
using grad::Tensor;

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

std::vector<CheckResult> run_verify(const ExperimentConfig& config) {
  config.validate();
  std::vector<CheckResult> out;

  const Datasets data = build_datasets(config);
  {
    const Datasets again = build_datasets(config);
    const bool same = again.train.inputs == data.train.inputs &&
                      again.test.inputs == data.test.inputs &&
                      again.train.targets.values == data.train.targets.values &&
                      again.train.targets.labels == data.train.targets.labels;
    out.push_back({"data determinism", same, same ? "identical" : "datasets differ"});
  }

  const std::size_t classes = config.task == Task::regression ? 0 : data.train.targets.num_classes;
  const model::MlpSpec spec = config.model_spec(data.train.dim(), classes);
  const model::LossKind loss = spec.natural_loss();

  {
    const model::Model fresh = model::build_mlp(spec, config.seeds.front());
    const std::size_t rows = std::min<std::size_t>(10, data.test.size());
    std::vector<std::size_t> idx(rows);
    for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
    const auto sub = data.test.subset(idx);
    const Tensor analytic = model::input_gradient(fresh, sub.inputs, sub.targets, loss);
    double worst = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t one = r;
      const auto target = sub.targets.subset(std::span(&one, 1));
      const grad::ScalarFunction fn = [&](const Tensor& point) {
        const auto v = point.values();
        return model::per_sample_loss(fresh, Tensor::matrix(1, v.size(), {v.begin(), v.end()}),
                                      target, loss)[0];
      };
      const auto row = sub.inputs.row(r);
      const auto grow = analytic.row(r);
      const Tensor numeric = grad::finite_difference_gradient(fn, Tensor::vector({row.begin(), row.end()}));
      worst = std::max(worst, grad::max_relative_error(Tensor::vector({grow.begin(), grow.end()}), numeric));
    }
    out.push_back({"input gradient vs finite differences", worst < 1e-4,
                   "max relative error " + sci(worst)});
  }

  const model::Ensemble ensemble = adversarial_train(config, data.train);
  const model::Model& m0 = ensemble.member(0);
  const Tensor& x = data.test.inputs;
  const auto& y = data.test.targets;

  {
    bool ok = true;
    std::vector<AttackKind> kinds{AttackKind::fgsm, AttackKind::pgd};
    if (config.task != Task::regression) {
      kinds.push_back(AttackKind::bv);
    } else {
      kinds.push_back(AttackKind::bias_dir);
      kinds.push_back(AttackKind::var_dir);
    }
    for (AttackKind kind : kinds) {
      AttackSpec a;
      a.kind = kind;
      ok = ok && attack::attack_ensemble(ensemble, x, y, a).x_adv == x;
    }
    out.push_back({"attacks are the identity at eps = 0", ok, ok ? "exact" : "input changed"});
  }

  {
    AttackSpec f;
    f.kind = AttackKind::fgsm;
    f.epsilon = config.epsilons.back() > 0.0 ? config.epsilons.back() : 0.1;
    AttackSpec p = f;
    p.kind = AttackKind::pgd;
    p.steps = 1;
    p.step_size = f.epsilon;
    const auto rf = attack::fgsm(m0, x, y, f);
    const auto rp = attack::pgd(m0, x, y, p);
    const bool same = rf.x_adv == rp.x_adv;
    out.push_back({"pgd with one full step equals fgsm", same, same ? "bit-exact" : "differs"});
    AttackSpec p5 = p;
    p5.steps = 5;
    p5.step_size.reset();
    const double bound_f = max_abs_diff(rf.x_adv, x);
    const double bound_p = max_abs_diff(attack::pgd(m0, x, y, p5).x_adv, x);
    const bool ok = bound_f <= f.epsilon && bound_p <= f.epsilon;
    out.push_back({"fgsm and pgd stay in the eps ball", ok,
                   "max |beta| " + sci(std::max(bound_f, bound_p)) + " for eps " + sci(f.epsilon)});
  }

  {
    double worst = 0.0;
    if (config.task == Task::regression) {
      for (double g : decomp::mse_identity_gaps(ensemble, data.test)) worst = std::max(worst, g);
    } else {
      for (double g : decomp::ce_identity_gaps(ensemble, data.test)) worst = std::max(worst, g);
    }
    out.push_back({"clean ensemble identity per point", worst < 1e-10, "max gap " + sci(worst)});
  }

  {
    const auto bytes = model::serialize_model(m0);
    const model::Model back = model::deserialize_model(bytes, m0.seed());
    const bool ok = back.same_parameters(m0) && back.spec() == m0.spec() &&
                    model::serialize_model(back) == bytes;
    out.push_back({"model serialization round trip", ok, std::to_string(bytes.size()) + " bytes"});
  }

  {
    const std::string a = format_csv(sweep(config, ensemble, data.test));
    const std::string b = format_csv(sweep(config, ensemble, data.test));
    out.push_back({"sweep output determinism", a == b, std::to_string(a.size()) + " bytes"});
  }
  return out;
}

}  // namespace bvlab::harness
