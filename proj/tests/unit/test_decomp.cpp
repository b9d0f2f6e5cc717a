#include <gtest/gtest.h>

#include <cmath>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"
#include "bvlab/common/rng.hpp"
#include "bvlab/data/synthetic.hpp"
#include "bvlab/decomp/cross_entropy.hpp"
#include "bvlab/decomp/mse.hpp"
#include "bvlab/decomp/taylor.hpp"
#include "support.hpp"

using namespace bvlab;
using namespace bvlab::decomp;
using bvlab::grad::Tensor;
using bvlab::testing::affine_model;
using bvlab::testing::constant_model;

namespace {

data::LabeledDataset regression_data(Tensor x, std::vector<double> y, double halfwidth = 0.0) {
  data::LabeledDataset ds;
  ds.inputs = std::move(x);
  ds.targets.values = std::move(y);
  ds.noise_halfwidth = halfwidth;
  return ds;
}

data::LabeledDataset class_data(Tensor x, std::vector<std::size_t> labels, std::size_t c) {
  data::LabeledDataset ds;
  ds.inputs = std::move(x);
  ds.targets.labels = std::move(labels);
  ds.targets.num_classes = c;
  return ds;
}

Tensor random_batch(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed, 0);
  std::vector<double> v(n * d);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::matrix(n, d, v);
}

// Two-class softmax member that outputs (p, 1 - p) everywhere.
model::Model constant_softmax(double p) {
  return affine_model(1, 2, {0, 0}, {std::log(p), std::log(1 - p)}, model::Head::softmax);
}

attack::AttackSpec make(attack::AttackKind kind, double eps) {
  attack::AttackSpec s;
  s.kind = kind;
  s.epsilon = eps;
  return s;
}

const TargetFn kZero = [](std::span<const double>) { return 0.0; };

}  // namespace

TEST(MseDecomp, HandExample) {
  const model::Ensemble e({constant_model(1, 0.0), constant_model(1, 2.0)});
  const auto r = mse_decompose(e, regression_data(Tensor::matrix(1, 1, {0.3}), {0.0}), kZero, 0.0);
  EXPECT_DOUBLE_EQ(r.bias, 1.0);
  EXPECT_DOUBLE_EQ(r.variance, 1.0);
  EXPECT_DOUBLE_EQ(r.total, 2.0);
  EXPECT_DOUBLE_EQ(r.noise, 0.0);
  EXPECT_EQ(r.residual, 0.0);
  EXPECT_EQ(r.members, 2u);
  EXPECT_EQ(r.points, 1u);
}

TEST(MseDecomp, PerfectEnsemble) {
  const TargetFn truth = [](std::span<const double> x) { return 2.0 * x[0] - 1.0; };
  const model::Ensemble e({affine_model(1, 1, {2}, {-1}), affine_model(1, 1, {2}, {-1})});
  const auto x = Tensor::matrix(3, 1, {-1, 0, 0.5});
  const auto r = mse_decompose(e, regression_data(x, {-3, -1, 0}), truth, 0.0);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(r.bias, 0.0);
  EXPECT_EQ(r.variance, 0.0);
}

TEST(MseDecomp, NoiseFloor) {
  data::LinearRegressionParams p;
  p.n = 10000;
  p.seed = 3;
  const auto ds = data::gen_linear_regression(p);
  const model::Ensemble e({affine_model(2, 1, {2, -3}, {0.5})});
  const auto r = mse_decompose(e, ds, *ds.truth, ds.noise_variance());
  EXPECT_NEAR(r.bias, 0.0, 1e-25);
  EXPECT_NEAR(r.total / ds.noise_variance(), 1.0, 0.04);
  EXPECT_NEAR(r.total, r.noise + r.noise_gap, 1e-12);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("variance"), std::string::npos);
}

TEST(MseDecomp, ZeroPerturbationMatchesClean) {
  data::LinearRegressionParams p;
  p.n = 50;
  const auto ds = data::gen_linear_regression(p);
  const model::MlpSpec spec{2, {4}, 1, model::Activation::sigmoid, model::Head::linear};
  const model::Ensemble e({model::build_mlp(spec, 1), model::build_mlp(spec, 2), model::build_mlp(spec, 3)});
  const auto clean = mse_decompose(e, ds, *ds.truth, ds.noise_variance());
  for (auto kind : {attack::AttackKind::none, attack::AttackKind::bias_dir, attack::AttackKind::var_dir}) {
    const auto adv = mse_adv_decompose(e, ds, *ds.truth, ds.noise_variance(), make(kind, 0.0));
    EXPECT_EQ(adv.total, clean.total);
    EXPECT_EQ(adv.bias, clean.bias);
    EXPECT_EQ(adv.variance, clean.variance);
    EXPECT_EQ(adv.cx_mean, 0.0);
    EXPECT_EQ(adv.cxprime_mean, 0.0);
    EXPECT_EQ(adv.residual, clean.residual);
  }
}

TEST(MseDecomp, AbsoluteResidualBoundsSignedMean) {
  data::LinearRegressionParams p;
  p.n = 80;
  const auto ds = data::gen_linear_regression(p);
  const model::MlpSpec spec{2, {5}, 1, model::Activation::sigmoid, model::Head::linear};
  const model::Ensemble e({model::build_mlp(spec, 4), model::build_mlp(spec, 5), model::build_mlp(spec, 6)});
  // only identity rounding left at eps = 0
  EXPECT_LT(mse_adv_decompose(e, ds, *ds.truth, 0.0, make(attack::AttackKind::fgsm, 0.0)).residual_abs_mean, 1e-14);
  for (auto kind : {attack::AttackKind::fgsm, attack::AttackKind::bias_dir, attack::AttackKind::var_dir}) {
    const auto r = mse_adv_decompose(e, ds, *ds.truth, 0.0, make(kind, 0.1));
    EXPECT_GT(r.residual_abs_mean, 0.0);
    EXPECT_GE(r.residual_abs_mean, std::abs(r.residual) - 1e-15) << attack::to_string(kind);
  }
}

TEST(MseDecomp, IdentityGaps) {
  data::LinearRegressionParams p;
  p.n = 200;
  const auto ds = data::gen_linear_regression(p);
  const model::MlpSpec spec{2, {6}, 1, model::Activation::relu, model::Head::linear};
  const model::Ensemble e({model::build_mlp(spec, 1), model::build_mlp(spec, 2), model::build_mlp(spec, 3)});
  for (double gap : mse_identity_gaps(e, ds)) ASSERT_LT(gap, 1e-10);
}

TEST(MseDecomp, LinearEnsembleFirstOrderExact) {
  data::LinearRegressionParams p;
  p.n = 100;
  const auto ds = data::gen_linear_regression(p);
  const model::Ensemble e({affine_model(2, 1, {1.8, -2.9}, {0.4}), affine_model(2, 1, {2.3, -3.1}, {0.55}),
                           affine_model(2, 1, {1.9, -2.7}, {0.45})});
  for (auto kind : {attack::AttackKind::bias_dir, attack::AttackKind::var_dir, attack::AttackKind::fgsm}) {
    const auto r = mse_adv_decompose(e, ds, *ds.truth, ds.noise_variance(), make(kind, 0.2));
    EXPECT_LT(std::abs(r.linearization_residual), 1e-10) << attack::to_string(kind);
    EXPECT_NEAR(r.residual, r.curvature, 1e-10);
    EXPECT_GT(r.mse_level, 0.0);
  }
}

TEST(MseDecomp, PerturbedSplitMatchesDirectComputation) {
  const model::Ensemble e({affine_model(1, 1, {1}, {0}), affine_model(1, 1, {3}, {0})});
  const auto ds = regression_data(Tensor::matrix(1, 1, {1.0}), {0.0});
  const auto beta = Tensor::matrix(1, 1, {0.5});
  const auto r = mse_decompose_with_beta(e, ds, kZero, 0.0, beta);
  // Members at 1.5: 1.5 and 4.5, mean 3.
  EXPECT_DOUBLE_EQ(r.perturbed_bias, 9.0);
  EXPECT_DOUBLE_EQ(r.perturbed_variance, 2.25);
  EXPECT_DOUBLE_EQ(r.total, (1.5 * 1.5 + 4.5 * 4.5) / 2);
  EXPECT_DOUBLE_EQ(r.cx_mean, 1.0);
  // 2 * mean_k (f_k - f_bar)(w_k - w_bar) beta = 2 * 1 * 0.5 = 1.
  EXPECT_DOUBLE_EQ(r.cxprime_mean, 1.0);
  // (0 - 2 - 1)^2
  EXPECT_DOUBLE_EQ(r.bias, 9.0);
  EXPECT_DOUBLE_EQ(r.variance, 1.0);
  EXPECT_DOUBLE_EQ(r.curvature, 0.25);
  EXPECT_THROW(mse_decompose_with_beta(e, ds, kZero, 0.0, Tensor::matrix(1, 2, {0, 0})), ShapeError);
}

TEST(CeDecomp, SymmetricPairHandExample) {
  const model::Ensemble e({constant_softmax(0.8), constant_softmax(0.2)});
  const auto ds = class_data(Tensor::matrix(1, 1, {0.0}), {1}, 2);
  const auto r = ce_kl_decompose(e, ds);
  EXPECT_NEAR(r.bias_kl, std::log(2.0), 1e-15);
  const double v = 0.5 * std::log(0.5 / 0.8) + 0.5 * std::log(0.5 / 0.2);
  EXPECT_NEAR(r.variance_kl, v, 1e-15);
  EXPECT_NEAR(r.total_ce, (-std::log(0.8) - std::log(0.2)) / 2, 1e-15);
  EXPECT_LT(std::abs(r.identity_residual), 1e-12);
  for (double g : ce_identity_gaps(e, ds)) EXPECT_LT(g, 1e-12);
}

TEST(CeDecomp, IdenticalMembers) {
  const model::Ensemble e({constant_softmax(0.7), constant_softmax(0.7)});
  const auto r = ce_kl_decompose(e, class_data(Tensor::matrix(2, 1, {0, 1}), {0, 1}, 2));
  EXPECT_NEAR(r.variance_kl, 0.0, 1e-15);
  EXPECT_NEAR(r.total_ce, r.bias_kl, 1e-15);
  EXPECT_NEAR(r.bias_kl, (-std::log(0.7) - std::log(0.3)) / 2, 1e-15);
}

TEST(CeDecomp, KlDivergenceConventions) {
  const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
  EXPECT_DOUBLE_EQ(kl_divergence(p, q), std::log(2.0));
  EXPECT_EQ(kl_divergence(q, q), 0.0);
}

TEST(CeDecomp, ZeroPerturbation) {
  const model::MlpSpec spec{3, {5}, 3, model::Activation::sigmoid, model::Head::softmax};
  const model::Ensemble e({model::build_mlp(spec, 1), model::build_mlp(spec, 2)});
  const auto ds = class_data(random_batch(10, 3, 2), {0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, 3);
  const auto clean = ce_kl_decompose(e, ds);
  for (auto kind : {attack::AttackKind::fgsm, attack::AttackKind::bv, attack::AttackKind::pgd}) {
    const auto r = ce_adv_firstorder(e, ds, make(kind, 0.0));
    EXPECT_EQ(r.cx_term, 0.0);
    EXPECT_EQ(r.cxprime_term, 0.0);
    EXPECT_NEAR(r.residual, 0.0, 1e-15);
    EXPECT_EQ(r.bias_kl, clean.bias_kl);
    EXPECT_EQ(r.perturbed_variance_kl, clean.variance_kl);
  }
}

TEST(CeDecomp, IdentityOnRandomEnsemble) {
  const model::MlpSpec spec{4, {6}, 3, model::Activation::relu, model::Head::softmax};
  const model::Ensemble e({model::build_mlp(spec, 4), model::build_mlp(spec, 5), model::build_mlp(spec, 6)});
  std::vector<std::size_t> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = i % 3;
  const auto ds = class_data(random_batch(40, 4, 7, 3.0), labels, 3);
  for (double g : ce_identity_gaps(e, ds)) ASSERT_LT(g, 1e-10);
  const auto r = ce_adv_firstorder(e, ds, make(attack::AttackKind::fgsm, 0.1));
  EXPECT_LT(std::abs(r.identity_residual), 1e-10);
  EXPECT_NEAR(r.total_ce, r.perturbed_bias_kl + r.perturbed_variance_kl, 1e-10);
  // The pi*-factor part of the variance gradient cancels for a geometric mean.
  EXPECT_LT(std::abs(r.cxprime_factor_term), 1e-12);
}

TEST(CeDecomp, SingleMemberMatchesBvInnerProduct) {
  const model::MlpSpec spec{3, {5}, 2, model::Activation::sigmoid, model::Head::softmax};
  const auto m = model::build_mlp(spec, 8);
  const model::Ensemble e({m});
  std::vector<std::size_t> labels(12);
  for (std::size_t i = 0; i < 12; ++i) labels[i] = i % 2;
  const auto ds = class_data(random_batch(12, 3, 9), labels, 2);
  const double eps = 0.05;
  const auto r = ce_adv_firstorder(e, ds, make(attack::AttackKind::bv, eps));
  const auto g = model::input_gradient(m, ds.inputs, ds.targets, model::LossKind::cross_entropy);
  // beta = eps * g, so the mean inner product is eps * mean ||g||^2.
  std::vector<double> inner(12);
  for (std::size_t r2 = 0; r2 < 12; ++r2) inner[r2] = eps * dot(g.row(r2), g.row(r2));
  EXPECT_NEAR(r.cx_term, mean(inner), 1e-10);
  EXPECT_EQ(r.cxprime_term, 0.0);
  EXPECT_NEAR(r.variance_kl, 0.0, 1e-15);
}

TEST(ScoreDecomp, ZeroPerturbation) {
  const auto m = model::build_mlp({3, {4}, 3, model::Activation::sigmoid, model::Head::softmax}, 3);
  const auto ds = class_data(random_batch(9, 3, 4), {0, 1, 2, 0, 1, 2, 0, 1, 2}, 3);
  const auto r = softmax_ce_adv_decompose(m, ds, make(attack::AttackKind::bv, 0.0));
  EXPECT_EQ(r.ci_mean, 0.0);
  EXPECT_EQ(r.perturbed_ce, r.clean_ce);
  EXPECT_EQ(r.residual, 0.0);
  // Per-class means summed: 3 classes with 3 points each.
  const auto losses = model::per_sample_loss(m, ds.inputs, ds.targets, model::LossKind::cross_entropy);
  double expect = 0.0;
  for (std::size_t c = 0; c < 3; ++c) expect += (losses[c] + losses[c + 3] + losses[c + 6]) / 3.0;
  EXPECT_NEAR(r.clean_ce, expect, 1e-14);
}

TEST(ScoreDecomp, BvDirectionMaximizesFirstOrderTerm) {
  const auto m = model::build_mlp({3, {5}, 3, model::Activation::sigmoid, model::Head::softmax}, 5);
  std::vector<std::size_t> labels(15);
  for (std::size_t i = 0; i < 15; ++i) labels[i] = (i * 2) % 3;
  const auto ds = class_data(random_batch(15, 3, 6), labels, 3);
  const double eps = 0.1;
  const auto rec = attack::bv_attack(m, ds.inputs, ds.targets, make(attack::AttackKind::bv, eps));
  Tensor beta = rec.x_adv;
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] -= ds.inputs[i];
  const double best = softmax_ce_decompose_with_beta(m, ds, beta).ci_mean;
  EXPECT_GT(best, 0.0);
  CounterRng rng(77, 0);
  for (int t = 0; t < 1000; ++t) {
    Tensor other = beta;
    for (std::size_t r = 0; r < other.rows(); ++r) {
      const double n = l2_norm(beta.row(r));
      auto row = other.row(r);
      for (auto& v : row) v = rng.normal();
      const double m2 = l2_norm(row);
      for (auto& v : row) v *= n / m2;
    }
    ASSERT_LE(softmax_ce_decompose_with_beta(m, ds, other).ci_mean, best + 1e-12);
  }
}

TEST(ScoreDecomp, LinearSoftmaxQuadraticResidual) {
  const auto m = affine_model(2, 3, {0.4, -1.0, 0.3, 1.2, 0.2, -0.8}, {0.1, 0.0, -0.1}, model::Head::softmax);
  const auto ds = class_data(random_batch(30, 2, 8), std::vector<std::size_t>(30, 1), 3);
  const auto scan = taylor_residual_scan(
      [&](double eps) { return softmax_ce_adv_decompose(m, ds, make(attack::AttackKind::bv, eps)).residual; },
      {0.08, 0.04, 0.02, 0.01, 0.005});
  EXPECT_FALSE(scan.exact);
  EXPECT_NEAR(scan.slope, 2.0, 0.2);
}

TEST(ScoreDecomp, EmptyClassSkipped) {
  const auto m = model::build_mlp({2, {}, 3, model::Activation::sigmoid, model::Head::softmax}, 1);
  const auto r = softmax_ce_adv_decompose(m, class_data(random_batch(4, 2, 1), {0, 0, 2, 2}, 3),
                                          make(attack::AttackKind::fgsm, 0.1));
  EXPECT_EQ(r.skipped_classes, (std::vector<std::size_t>{1}));
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Taylor, QuadraticToy) {
  // f(x) = x^2 attacked along +1 from x0: residual (x0 + e)^2 - x0^2 - 2 x0 e = e^2.
  const double x0 = 0.0;
  const auto scan = taylor_residual_scan(
      [&](double e) { return (x0 + e) * (x0 + e) - x0 * x0 - 2.0 * x0 * e; }, {0.1, 0.05, 0.025, 0.0125});
  EXPECT_NEAR(scan.slope, 2.0, 1e-9);
  EXPECT_EQ(scan.residuals[0], 0.1 * 0.1);
  EXPECT_FALSE(scan.exact);
}

TEST(Taylor, LinearIsExact) {
  const auto scan = taylor_residual_scan([](double) { return 1e-16; }, {0.1, 0.05, 0.025, 0.0125});
  EXPECT_TRUE(scan.exact);
  EXPECT_FALSE(scan.notes.empty());
  for (bool u : scan.used) EXPECT_FALSE(u);
}

TEST(Taylor, FloorExcludesPoints) {
  const auto scan = taylor_residual_scan([](double e) { return e < 0.02 ? 0.0 : e * e; },
                                         {0.1, 0.05, 0.025, 0.0125, 0.00625});
  EXPECT_EQ(scan.used, (std::vector<bool>{true, true, true, false, false}));
  EXPECT_NEAR(scan.slope, 2.0, 1e-9);
  EXPECT_FALSE(scan.notes.empty());
}

TEST(Taylor, GridValidation) {
  const auto f = [](double e) { return e * e; };
  EXPECT_THROW(taylor_residual_scan(f, {0.1, 0.05, 0.025}), ConfigError);
  EXPECT_THROW(taylor_residual_scan(f, {0.1, 0.05, 0.03, 0.01}), ConfigError);
  EXPECT_THROW(taylor_residual_scan(f, {0.1, 0.05, 0.0, 0.0}), ConfigError);
}

TEST(Taylor, ReluActivationFlips) {
  model::MlpSpec spec{1, {1}, 1, model::Activation::relu, model::Head::linear};
  const model::Model m(spec,
                       {model::Layer{Tensor::matrix(1, 1, {1}), Tensor::vector({0})},
                        model::Layer{Tensor::matrix(1, 1, {1}), Tensor::vector({0})}},
                       0);
  const auto x = Tensor::matrix(2, 1, {-0.1, 1.0});
  const auto adv = Tensor::matrix(2, 1, {0.1, 1.1});
  EXPECT_EQ(activation_flips(m, x, adv), (std::vector<bool>{true, false}));
  const model::Ensemble e({m});
  EXPECT_EQ(flip_free_rows(e, x, {adv}), (std::vector<std::size_t>{1}));
  spec.activation = model::Activation::sigmoid;
  const model::Model s(spec, m.layers(), 0);
  EXPECT_EQ(activation_flips(s, x, adv), (std::vector<bool>{false, false}));
}
