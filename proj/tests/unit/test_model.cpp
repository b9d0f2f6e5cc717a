#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"
#include "bvlab/common/rng.hpp"
#include "bvlab/data/synthetic.hpp"
#include "bvlab/grad/finite_difference.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/mlp.hpp"
#include "bvlab/model/serialize.hpp"
#include "bvlab/model/train.hpp"
#include "support.hpp"

using namespace bvlab;
using namespace bvlab::model;
using bvlab::grad::Tensor;
using bvlab::testing::affine_model;

namespace {

data::Targets regression_targets(std::vector<double> v) {
  data::Targets t;
  t.values = std::move(v);
  return t;
}

data::Targets class_targets(std::vector<std::size_t> labels, std::size_t classes) {
  data::Targets t;
  t.labels = std::move(labels);
  t.num_classes = classes;
  return t;
}

double kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

double mean_kl(std::span<const double> z, const std::vector<std::vector<double>>& members) {
  double s = 0.0;
  for (const auto& m : members) s += kl(z, m);
  return s / static_cast<double>(members.size());
}

Tensor log_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> v;
  for (const auto& r : rows)
    for (double p : r) v.push_back(std::log(p));
  return Tensor::matrix(rows.size(), rows.front().size(), v);
}

std::vector<double> exp_row(const Tensor& t, std::size_t r) {
  std::vector<double> out;
  for (double v : t.row(r)) out.push_back(std::exp(v));
  return out;
}

}  // namespace

TEST(Mlp, BuildShapes) {
  const auto m = build_mlp({2, {100}, 1, Activation::sigmoid, Head::linear}, 1);
  ASSERT_EQ(m.layers().size(), 2u);
  EXPECT_EQ(m.layers()[0].weight.shape(), (grad::Shape{2, 100}));
  EXPECT_EQ(m.layers()[0].bias.shape(), (grad::Shape{100}));
  EXPECT_EQ(m.layers()[1].weight.shape(), (grad::Shape{100, 1}));
  EXPECT_EQ(m.layers()[1].bias.shape(), (grad::Shape{1}));
  EXPECT_EQ(m.parameter_count(), 2u * 100 + 100 + 100 + 1);
  for (double w : m.layers()[0].weight.values()) ASSERT_LE(std::abs(w), 1.0 / std::sqrt(2.0));
  for (double w : m.layers()[1].weight.values()) ASSERT_LE(std::abs(w), 0.1);
}

TEST(Mlp, SeedDeterminism) {
  const MlpSpec spec{3, {4, 5}, 2, Activation::relu, Head::softmax};
  EXPECT_TRUE(build_mlp(spec, 7).same_parameters(build_mlp(spec, 7)));
  EXPECT_FALSE(build_mlp(spec, 7).same_parameters(build_mlp(spec, 8)));
}

TEST(Mlp, SpecValidation) {
  EXPECT_THROW(build_mlp({0, {}, 1, Activation::sigmoid, Head::linear}, 1), ConfigError);
  EXPECT_THROW(build_mlp({2, {0}, 1, Activation::sigmoid, Head::linear}, 1), ConfigError);
  EXPECT_THROW(build_mlp({2, {}, 1, Activation::sigmoid, Head::softmax}, 1), ConfigError);
  EXPECT_THROW(parse_activation("tanh"), ConfigError);
  EXPECT_EQ(parse_head(to_string(Head::softmax)), Head::softmax);
}

TEST(Mlp, SoftmaxRowsSumToOne) {
  const auto m = build_mlp({4, {6}, 3, Activation::sigmoid, Head::softmax}, 3);
  CounterRng rng(5, 0);
  std::vector<double> xs(40);
  for (auto& v : xs) v = rng.normal() * 5.0;
  const auto p = predict(m, Tensor::matrix(10, 4, xs));
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mlp, ZeroWeightsGiveZero) {
  auto m = build_mlp({2, {3}, 1, Activation::sigmoid, Head::linear}, 1);
  for (auto& layer : m.layers()) {
    for (auto& w : layer.weight.values()) w = 0.0;
    for (auto& b : layer.bias.values()) b = 0.0;
  }
  const auto y = predict(m, Tensor::matrix(2, 2, {1, 2, -3, 4}));
  EXPECT_EQ(y.values()[0], 0.0);
  EXPECT_EQ(y.values()[1], 0.0);
}

TEST(Mlp, HandSetForward) {
  // One hidden sigmoid unit: h = s(x1 - x2), y = 2h + 1.
  MlpSpec spec{2, {1}, 1, Activation::sigmoid, Head::linear};
  Model m(spec,
          {Layer{Tensor::matrix(2, 1, {1, -1}), Tensor::vector({0})},
           Layer{Tensor::matrix(1, 1, {2}), Tensor::vector({1})}},
          0);
  const auto y = predict(m, Tensor::vector({0.5, -0.25}));
  EXPECT_NEAR(y.values()[0], 2.0 / (1.0 + std::exp(-0.75)) + 1.0, 1e-15);
  spec.activation = Activation::relu;
  Model r(spec,
          {Layer{Tensor::matrix(2, 1, {1, -1}), Tensor::vector({0})},
           Layer{Tensor::matrix(1, 1, {2}), Tensor::vector({1})}},
          0);
  EXPECT_DOUBLE_EQ(predict(r, Tensor::matrix(2, 2, {0.5, -0.25, -1, 1})).values()[0], 2.5);
  EXPECT_DOUBLE_EQ(predict(r, Tensor::matrix(2, 2, {0.5, -0.25, -1, 1})).values()[1], 1.0);
}

TEST(InputGradient, LinearMseExample) {
  const auto m = affine_model(2, 1, {1, -2}, {0});
  const auto g = input_gradient(m, Tensor::matrix(1, 2, {0, 0}), regression_targets({-1}), LossKind::mse);
  EXPECT_DOUBLE_EQ(g.at(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.at(0, 1), -4.0);
  const auto z = input_gradient(m, Tensor::matrix(1, 2, {1, 0}), regression_targets({1}), LossKind::mse);
  EXPECT_EQ(z.at(0, 0), 0.0);
  EXPECT_EQ(z.at(0, 1), 0.0);
}

TEST(InputGradient, SoftmaxLinearClosedForm) {
  const std::vector<double> w{0.3, -1.2, 0.7, 0.5, 2.0, -0.4};  // [2, 3]
  const auto m = affine_model(2, 3, w, {0.1, 0.0, -0.2}, Head::softmax);
  const auto x = Tensor::matrix(1, 2, {0.4, -0.9});
  const auto g = input_gradient(m, x, class_targets({2}, 3), LossKind::cross_entropy);
  const auto p = predict(m, x);
  for (std::size_t j = 0; j < 2; ++j) {
    double expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i) expect += w[j * 3 + i] * (p.at(0, i) - (i == 2 ? 1.0 : 0.0));
    EXPECT_NEAR(g.at(0, j), expect, 1e-14);
  }
  EXPECT_THROW(input_gradient(m, x, class_targets({3}, 3), LossKind::cross_entropy), ConfigError);
  EXPECT_THROW(input_gradient(m, x, class_targets({0}, 3), LossKind::mse), ConfigError);
}

TEST(InputGradient, MatchesFiniteDifferences) {
  CounterRng rng(42, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const bool cls = trial % 2 == 1;
    const MlpSpec spec{3, {5, 4}, cls ? 3u : 1u, Activation::sigmoid, cls ? Head::softmax : Head::linear};
    const auto m = build_mlp(spec, 1000 + trial);
    std::vector<double> xv(3);
    for (auto& v : xv) v = rng.normal();
    const auto x = Tensor::matrix(1, 3, xv);
    const auto y = cls ? class_targets({trial % 3u}, 3) : regression_targets({rng.normal()});
    const auto loss = spec.natural_loss();
    const auto g = input_gradient(m, x, y, loss);
    grad::ScalarFunction fn = [&](const Tensor& t) { return per_sample_loss(m, t, y, loss)[0]; };
    const auto fd = grad::finite_difference_gradient(fn, x, 1e-5);
    ASSERT_LT(grad::max_relative_error(g, fd), 1e-4) << "trial " << trial;
  }
}

TEST(InputGradient, OutputAndLogProbGradients) {
  const auto m = affine_model(2, 1, {3, -1}, {0.5});
  const auto g = output_gradient(m, Tensor::matrix(2, 2, {1, 1, 0, 2}));
  EXPECT_DOUBLE_EQ(g.at(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(g.at(1, 1), -1.0);
  const auto s = affine_model(2, 2, {1, 0, 0, 1}, {0, 0}, Head::softmax);
  const auto x = Tensor::matrix(1, 2, {0.3, -0.3});
  const auto lg = log_prob_gradient(s, x, 0);
  const auto p = predict(s, x);
  EXPECT_NEAR(lg.at(0, 0), 1.0 - p.at(0, 0), 1e-15);
  EXPECT_NEAR(lg.at(0, 1), -p.at(0, 1), 1e-15);
  EXPECT_THROW(log_prob_gradient(s, x, 2), ConfigError);
}

TEST(Train, ZeroEpochsLeavesParameters) {
  data::LinearRegressionParams p;
  p.n = 50;
  const auto ds = data::gen_linear_regression(p);
  const auto m = build_mlp({2, {8}, 1, Activation::sigmoid, Head::linear}, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(train(m, ds, cfg).same_parameters(m));
}

TEST(Train, TwoGaussiansSeparable) {
  data::TwoGaussiansParams p;
  p.n = 400;
  p.dim = 10;
  const auto ds = data::gen_two_gaussians(p);
  // Independent oracle: full-batch logistic regression on the raw inputs.
  std::vector<double> w(p.dim, 0.0);
  double b = 0.0;
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> gw(p.dim, 0.0);
    double gb = 0.0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      const double z = dot(w, ds.inputs.row(r)) + b;
      const double err = 1.0 / (1.0 + std::exp(-z)) - static_cast<double>(ds.targets.labels[r]);
      for (std::size_t j = 0; j < p.dim; ++j) gw[j] += err * ds.inputs.at(r, j) / ds.size();
      gb += err / ds.size();
    }
    for (std::size_t j = 0; j < p.dim; ++j) w[j] -= 0.05 * gw[j];
    b -= 0.05 * gb;
  }
  std::size_t oracle_hits = 0;
  for (std::size_t r = 0; r < ds.size(); ++r)
    oracle_hits += ((dot(w, ds.inputs.row(r)) + b > 0.0) ? 1u : 0u) == ds.targets.labels[r];
  EXPECT_GE(oracle_hits, 396u);

  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.loss = LossKind::cross_entropy;
  const auto m = train(build_mlp({p.dim, {16}, 2, Activation::sigmoid, Head::softmax}, 1), ds, cfg);
  const auto pred = predict_classes(m, ds.inputs);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) hits += pred[r] == ds.targets.labels[r];
  EXPECT_GE(hits, 396u);
  EXPECT_EQ(m.loss_history().size(), 30u);
  EXPECT_LT(m.loss_history().back(), m.loss_history().front());
}

TEST(Train, NoiselessRegressionFitsLeastSquares) {
  data::LinearRegressionParams p;
  p.n = 200;
  p.weights = {1.5};
  p.intercept = -0.25;
  p.noise_halfwidth = 0.0;
  const auto ds = data::gen_linear_regression(p);
  TrainConfig cfg;
  cfg.epochs = 300;
  const auto m = train(build_mlp({1, {}, 1, Activation::sigmoid, Head::linear}, 2), ds, cfg);
  // Closed-form least squares for y = a x + c.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const double x = ds.inputs.at(r, 0), y = ds.targets.values[r];
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double n = static_cast<double>(ds.size());
  const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double c = (sy - a * sx) / n;
  EXPECT_NEAR(a, 1.5, 1e-12);
  EXPECT_NEAR(m.layers()[0].weight.values()[0], a, 1e-3);
  EXPECT_NEAR(m.layers()[0].bias.values()[0], c, 1e-3);
  const auto losses = per_sample_loss(m, ds.inputs, ds.targets, LossKind::mse);
  EXPECT_LT(bvlab::mean(losses), 1e-3);
}

TEST(Train, DeterministicAndThreadIndependent) {
  data::LinearRegressionParams p;
  p.n = 100;
  const auto ds = data::gen_linear_regression(p);
  const MlpSpec spec{2, {6}, 1, Activation::sigmoid, Head::linear};
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto one = train_ensemble(spec, {1, 2, 3, 4}, ds, cfg, 1);
  const auto four = train_ensemble(spec, {1, 2, 3, 4}, ds, cfg, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_TRUE(one.member(k).same_parameters(four.member(k)));
    EXPECT_EQ(one.member(k).seed(), k + 1);
  }
  EXPECT_FALSE(one.member(0).same_parameters(one.member(1)));
}

TEST(Train, DivergenceReportsEpoch) {
  data::LinearRegressionParams p;
  p.n = 64;
  p.weights = {1e3, -1e3};
  const auto ds = data::gen_linear_regression(p);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 100.0;
  try {
    train(build_mlp({2, {}, 1, Activation::sigmoid, Head::linear}, 1), ds, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_LT(e.index(), 500u);
    EXPECT_NE(std::string(e.what()).find("epoch " + std::to_string(e.index())), std::string::npos);
  }
}

TEST(Train, ConfigValidation) {
  data::LinearRegressionParams p;
  p.n = 10;
  const auto ds = data::gen_linear_regression(p);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(build_mlp({2, {}, 1, Activation::sigmoid, Head::linear}, 1), ds, cfg), ConfigError);
  cfg.learning_rate = 0.01;
  EXPECT_THROW(train(build_mlp({3, {}, 1, Activation::sigmoid, Head::linear}, 1), ds, cfg), ShapeError);
}

TEST(Ensemble, MeanAndGradient) {
  const Ensemble e({affine_model(2, 1, {1, 0}, {0}), affine_model(2, 1, {3, -2}, {2})});
  const auto x = Tensor::matrix(2, 2, {1, 1, 0, 0});
  const auto f = ensemble_mean(e, x);
  EXPECT_DOUBLE_EQ(f.values()[0], (1.0 + 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(f.values()[1], 1.0);
  const auto g = ensemble_mean_gradient(e, x);
  EXPECT_DOUBLE_EQ(g.at(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.at(0, 1), -1.0);
}

TEST(Ensemble, MeanGradientMatchesFiniteDifferences) {
  const MlpSpec spec{3, {7}, 1, Activation::sigmoid, Head::linear};
  const Ensemble e({build_mlp(spec, 1), build_mlp(spec, 2), build_mlp(spec, 3)});
  const auto x = Tensor::matrix(1, 3, {0.2, -0.7, 1.1});
  grad::ScalarFunction fn = [&](const Tensor& t) { return ensemble_mean(e, t).values()[0]; };
  EXPECT_LT(grad::max_relative_error(ensemble_mean_gradient(e, x),
                                     grad::finite_difference_gradient(fn, x, 1e-5)),
            1e-6);
}

TEST(Ensemble, RejectsMixedSpecs) {
  EXPECT_THROW(Ensemble({affine_model(2, 1, {1, 0}, {0}), affine_model(2, 2, {1, 0, 0, 1}, {0, 0}, Head::softmax)}),
               ConfigError);
  EXPECT_THROW(Ensemble(std::vector<Model>{}), ConfigError);
  const Ensemble e({affine_model(2, 1, {1, 0}, {0})});
  EXPECT_THROW(kl_mean(e, Tensor::matrix(1, 2, {0, 0})), ConfigError);
}

TEST(KlMean, SingleMemberIsIdentity) {
  const std::vector<std::vector<double>> rows{{0.7, 0.2, 0.1}};
  const auto lp = kl_mean_log({log_rows(rows)});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::exp(lp.at(0, i)), rows[0][i], 1e-15);
}

TEST(KlMean, SymmetricPair) {
  const auto lp = kl_mean_log({log_rows({{0.8, 0.2}}), log_rows({{0.2, 0.8}})});
  EXPECT_NEAR(std::exp(lp.at(0, 0)), 0.5, 1e-15);
  EXPECT_NEAR(std::exp(lp.at(0, 1)), 0.5, 1e-15);
}

TEST(KlMean, MinimizesOverSimplexGrid) {
  const std::vector<std::vector<double>> members{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}};
  std::vector<Tensor> logs;
  for (const auto& m : members) logs.push_back(log_rows({m}));
  const auto pi = exp_row(kl_mean_log(logs), 0);
  const double best = mean_kl(pi, members);
  double grid_min = 1e300;
  const int steps = 1000;
  for (int a = 0; a <= steps; ++a)
    for (int b = 0; a + b <= steps; ++b) {
      const std::vector<double> z{a / double(steps), b / double(steps), (steps - a - b) / double(steps)};
      grid_min = std::min(grid_min, mean_kl(z, members));
    }
  EXPECT_LE(best, grid_min + 1e-12);
  EXPECT_LT(grid_min - best, 1e-5);
}

TEST(KlMean, BeatsRandomCandidatesAndPythagorean) {
  CounterRng rng(9, 0);
  const std::size_t c = 4, k = 5;
  std::vector<std::vector<double>> members(k, std::vector<double>(c));
  for (auto& m : members) {
    double s = 0;
    for (auto& v : m) s += (v = -std::log(rng.uniform()));
    for (auto& v : m) v /= s;
  }
  std::vector<Tensor> logs;
  for (const auto& m : members) logs.push_back(log_rows({m}));
  const auto pi = exp_row(kl_mean_log(logs), 0);
  const double best = mean_kl(pi, members);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> z(c);
    double s = 0;
    for (auto& v : z) s += (v = -std::log(rng.uniform()));
    for (auto& v : z) v /= s;
    const double val = mean_kl(z, members);
    ASSERT_GE(val, best - 1e-12);
    ASSERT_NEAR(val, kl(z, pi) + best, 1e-12);
  }
}

TEST(KlMean, EnsembleFromModels) {
  const Ensemble e({affine_model(1, 2, {1, -1}, {0, 0}, Head::softmax),
                    affine_model(1, 2, {-1, 1}, {0, 0}, Head::softmax)});
  const auto pi = kl_mean(e, Tensor::matrix(3, 1, {-2, 0, 5}));
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(pi.at(r, 0), 0.5, 1e-15);
}

TEST(Serialize, RoundTripBitExact) {
  const auto m = build_mlp({3, {4, 2}, 3, Activation::relu, Head::softmax}, 11);
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes, 11);
  EXPECT_TRUE(back.same_parameters(m));
  EXPECT_EQ(back.spec(), m.spec());
  EXPECT_EQ(back.seed(), 11u);
  EXPECT_EQ(serialize_model(back), bytes);
  const auto x = Tensor::matrix(1, 3, {0.1, 0.2, 0.3});
  EXPECT_EQ(predict(back, x), predict(m, x));

  const auto path = (std::filesystem::temp_directory_path() / "bvlab_model.bvml").string();
  save_model(m, path);
  EXPECT_TRUE(load_model(path).same_parameters(m));
}

TEST(Serialize, RejectsCorruptInput) {
  const auto bytes = serialize_model(build_mlp({2, {3}, 1, Activation::sigmoid, Head::linear}, 1));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), FormatError);
  EXPECT_THROW(deserialize_model(std::span(bytes).first(bytes.size() - 1)), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_model(extra), FormatError);
  EXPECT_THROW(deserialize_model(std::span(bytes).first(3)), FormatError);
}
