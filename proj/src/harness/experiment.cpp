#include "bvlab/harness/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bvlab/attack/attack.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/common/numeric.hpp"
#include "bvlab/common/parallel.hpp"
#include "bvlab/common/rng.hpp"
#include "bvlab/data/cifar10.hpp"
#include "bvlab/data/synthetic.hpp"
#include "bvlab/decomp/cross_entropy.hpp"
#include "bvlab/decomp/mse.hpp"

namespace bvlab::harness {

using attack::AttackKind;
using attack::AttackSpec;

Datasets build_datasets(const ExperimentConfig& config) {
  CounterRng seeds(config.data_seed, 0xDA7A);
  const std::uint64_t train_seed = seeds.next_u64();
  const std::uint64_t test_seed = seeds.next_u64();
  Datasets out;
  switch (config.task) {
    case Task::regression: {
      data::LinearRegressionParams p;
      p.weights = config.weights;
      p.intercept = config.intercept;
      p.box = config.box;
      p.n = config.n_train;
      p.seed = train_seed;
      p.noise_halfwidth = config.noiseless_train ? 0.0 : config.noise_halfwidth;
      out.train = data::gen_linear_regression(p);
      p.n = config.n_test;
      p.seed = test_seed;
      p.noise_halfwidth = config.noise_halfwidth;
      out.test = data::gen_linear_regression(p);
      return out;
    }
    case Task::classification: {
      data::TwoGaussiansParams p;
      p.dim = config.dim;
      p.mean0 = config.mean0;
      p.mean1 = config.mean1;
      p.sd = config.sd;
      p.n = config.n_train;
      p.seed = train_seed;
      out.train = data::gen_two_gaussians(p);
      p.n = config.n_test;
      p.seed = test_seed;
      out.test = data::gen_two_gaussians(p);
      break;
    }
    case Task::cifar_subset: {
      auto [train, test] = data::split(data::load_cifar10(config.cifar_path, config.cifar_limit),
                                       config.test_fraction, config.data_seed);
      out.train = std::move(train);
      out.test = std::move(test);
      break;
    }
  }
  if (config.standardize) {
    const auto s = data::Standardizer::fit(out.train.inputs);
    out.train = s.apply(out.train);
    out.test = s.apply(out.test);
  }
  return out;
}

namespace {

std::size_t class_count(const ExperimentConfig& config, const data::LabeledDataset& data) {
  return config.task == Task::regression ? 0 : data.targets.num_classes;
}

std::optional<attack::ClampRange> clamp_for(const ExperimentConfig& config) {
  if (!config.clamp) return std::nullopt;
  auto [lo, hi] = data::cifar10_pixel_bounds();
  return attack::ClampRange{std::move(lo), std::move(hi)};
}

using Metrics = std::vector<std::pair<std::string, double>>;

Metrics mse_metrics(const decomp::MseReport& r) {
  return {{"total", r.total},
          {"bias", r.bias},
          {"variance", r.variance},
          {"noise", r.noise},
          {"cx_mean", r.cx_mean},
          {"cxprime_mean", r.cxprime_mean},
          {"residual", r.residual},
          {"curvature", r.curvature},
          {"noise_gap", r.noise_gap},
          {"perturbed_bias", r.perturbed_bias},
          {"perturbed_variance", r.perturbed_variance},
          {"degenerate_points", static_cast<double>(r.degenerate_points)}};
}

Metrics ce_metrics(const decomp::CeReport& r) {
  return {{"total_ce", r.total_ce},
          {"bias_kl", r.bias_kl},
          {"variance_kl", r.variance_kl},
          {"cx_term", r.cx_term},
          {"cxprime_term", r.cxprime_term},
          {"residual", r.residual},
          {"perturbed_bias_kl", r.perturbed_bias_kl},
          {"perturbed_variance_kl", r.perturbed_variance_kl},
          {"identity_residual", r.identity_residual},
          {"degenerate_points", static_cast<double>(r.degenerate_points)}};
}

void append_rows(std::vector<SweepRow>& rows, const std::string& task, AttackKind kind,
                 double epsilon, const Evaluation& eval, std::size_t seed_count) {
  for (const auto& [name, value] : eval.metrics) {
    rows.push_back({task, std::string(attack::to_string(kind)), epsilon, eval.mse_level,
                    eval.linf_level, name, value, seed_count});
  }
}

std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

model::TrainConfig train_config(const ExperimentConfig& config) {
  model::TrainConfig tc;
  tc.learning_rate = config.learning_rate;
  tc.epochs = config.train_epochs();
  tc.batch_size = config.batch_size;
  tc.loss = config.task == Task::regression ? model::LossKind::mse
                                            : model::LossKind::cross_entropy;
  if (config.train_attack != AttackKind::none) {
    AttackSpec a;
    a.kind = config.train_attack;
    a.epsilon = config.train_epsilon;
    a.steps = config.train_steps;
    a.clamp = clamp_for(config);
    tc.adversarial = a;
  }
  tc.mix_clean = config.mix_clean;
  return tc;
}

model::Ensemble adversarial_train(const ExperimentConfig& config,
                                  const data::LabeledDataset& train) {
  const model::MlpSpec spec = config.model_spec(train.dim(), class_count(config, train));
  return model::train_ensemble(spec, config.seeds, train, train_config(config), config.threads);
}

double Evaluation::metric(const std::string& name) const {
  for (const auto& [key, value] : metrics) {
    if (key == name) return value;
  }
  throw UsageError("no metric named '" + name + "'");
}

Evaluation evaluate_loss_decomposition(const model::Ensemble& ensemble,
                                       const data::LabeledDataset& test,
                                       const AttackSpec& attack) {
  Evaluation eval;
  if (test.is_classification()) {
    const auto r = decomp::ce_adv_firstorder(ensemble, test, attack);
    eval.mse_level = r.mse_level;
    eval.linf_level = r.linf_level;
    eval.metrics = ce_metrics(r);
  } else {
    if (!test.truth) throw ConfigError("regression decomposition needs the noiseless target");
    const auto r = decomp::mse_adv_decompose(ensemble, test, *test.truth, test.noise_variance(),
                                             attack);
    eval.mse_level = r.mse_level;
    eval.linf_level = r.linf_level;
    eval.metrics = mse_metrics(r);
  }
  return eval;
}

Evaluation evaluate_accuracy(const model::Ensemble& ensemble, const data::LabeledDataset& test,
                             const AttackSpec& attack, std::size_t threads) {
  if (!test.is_classification()) throw ConfigError("accuracy needs a classification task");
  const std::size_t k = ensemble.size();
  std::vector<double> accuracy(k), loss(k), mse(k), linf(k);
  parallel_for(k, threads, [&](std::size_t m) {
    AttackSpec own = attack;
    own.deployed = m;
    const auto record = attack::attack_ensemble(ensemble, test.inputs, test.targets, own);
    const model::Model& member = ensemble.member(m);
    const auto predicted = model::predict_classes(member, record.x_adv);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < predicted.size(); ++r) {
      if (predicted[r] == test.targets.labels[r]) ++correct;
    }
    accuracy[m] = static_cast<double>(correct) / static_cast<double>(predicted.size());
    loss[m] = mean(model::per_sample_loss(member, record.x_adv, test.targets,
                                          model::LossKind::cross_entropy));
    mse[m] = record.mse_level;
    linf[m] = record.linf_level;
  });
  Evaluation eval;
  eval.mse_level = mean(mse);
  eval.linf_level = *std::max_element(linf.begin(), linf.end());
  eval.metrics = {{"mean_accuracy", mean(accuracy)},
                  {"accuracy_variance", sample_variance(accuracy)},
                  {"mean_loss", mean(loss)},
                  {"loss_variance", sample_variance(loss)}};
  return eval;
}

double measure_level(const model::Ensemble& ensemble, const data::LabeledDataset& test,
                     const AttackSpec& attack, bool per_member, std::size_t threads) {
  if (!per_member) {
    return attack::attack_ensemble(ensemble, test.inputs, test.targets, attack).mse_level;
  }
  std::vector<double> levels(ensemble.size());
  parallel_for(ensemble.size(), threads, [&](std::size_t m) {
    AttackSpec own = attack;
    own.deployed = m;
    levels[m] = attack::attack_ensemble(ensemble, test.inputs, test.targets, own).mse_level;
  });
  return mean(levels);
}

std::vector<GridEntry> attack_grid(const ExperimentConfig& config) {
  std::vector<GridEntry> grid;
  for (AttackKind kind : config.attacks) {
    AttackSpec a = config.attack_template(kind);
    a.clamp = clamp_for(config);
    grid.push_back({a, config.epsilons});
  }
  return grid;
}

std::vector<SweepRow> accuracy_bias_variance(const model::Ensemble& ensemble,
                                             const data::LabeledDataset& test,
                                             const std::vector<GridEntry>& grid,
                                             const std::string& task, std::size_t threads) {
  std::vector<SweepRow> rows;
  for (const GridEntry& entry : grid) {
    for (double eps : entry.epsilons) {
      const auto eval = evaluate_accuracy(ensemble, test, entry.attack.with_epsilon(eps), threads);
      append_rows(rows, task, entry.attack.kind, eps, eval, ensemble.size());
    }
  }
  sort_rows(rows);
  return rows;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const model::Ensemble& ensemble,
                            const data::LabeledDataset& test) {
  const std::string task(to_string(config.task));
  const auto grid = attack_grid(config);
  switch (config.report) {
    case ReportKind::accuracy_bv:
      return accuracy_bias_variance(ensemble, test, grid, task, config.threads);
    case ReportKind::matched_compare:
      return matched_perturbation_compare(config, ensemble, test);
    case ReportKind::loss_decomposition:
      break;
  }
  std::vector<SweepRow> rows;
  for (const GridEntry& entry : grid) {
    for (double eps : entry.epsilons) {
      const auto eval = evaluate_loss_decomposition(ensemble, test, entry.attack.with_epsilon(eps));
      append_rows(rows, task, entry.attack.kind, eps, eval, ensemble.size());
    }
  }
  sort_rows(rows);
  return rows;
}

std::vector<SweepRow> matched_perturbation_compare(const ExperimentConfig& config,
                                                   const model::Ensemble& ensemble,
                                                   const data::LabeledDataset& test) {
  if (config.attacks.size() < 2) throw ConfigError("matched-compare needs at least two attacks");
  const std::string task(to_string(config.task));
  const bool per_member = test.is_classification();
  const auto grid = attack_grid(config);
  const auto level_of = [&](const AttackSpec& a) {
    return measure_level(ensemble, test, a, per_member, config.threads);
  };

  std::vector<double> targets = config.levels;
  if (targets.empty()) {
    for (double eps : config.epsilons) targets.push_back(level_of(grid.front().attack.with_epsilon(eps)));
  }

  std::vector<SweepRow> rows;
  for (const GridEntry& entry : grid) {
    for (double target : targets) {
      double eps = 0.0;
      bool matched = target == 0.0;
      if (!matched) {
        const auto close = [&](double level) {
          return std::abs(level - target) <= config.match_tolerance * target;
        };
        double best_eps = 0.0, best_gap = target;
        const auto probe = [&](double e) {
          const double level = level_of(entry.attack.with_epsilon(e));
          if (std::abs(level - target) < best_gap) {
            best_gap = std::abs(level - target);
            best_eps = e;
          }
          return level;
        };
        std::size_t steps = 0;
        double lo = 0.0, hi = std::sqrt(target);
        double level = probe(hi);
        ++steps;
        matched = close(level);
        while (!matched && level < target && steps < config.max_bisection) {
          lo = hi;
          hi *= 2.0;
          level = probe(hi);
          ++steps;
          matched = close(level);
        }
        while (!matched && steps < config.max_bisection) {
          const double mid = 0.5 * (lo + hi);
          level = probe(mid);
          ++steps;
          matched = close(level);
          if (level < target) {
            lo = mid;
          } else {
            hi = mid;
          }
        }
        eps = best_eps;
      }
      const AttackSpec a = entry.attack.with_epsilon(eps);
      Evaluation eval = per_member ? evaluate_accuracy(ensemble, test, a, config.threads)
                                   : evaluate_loss_decomposition(ensemble, test, a);
      eval.metrics.emplace_back("target_level", target);
      eval.metrics.emplace_back("matched", matched ? 1.0 : 0.0);
      append_rows(rows, task, entry.attack.kind, eps, eval, ensemble.size());
    }
  }
  sort_rows(rows);
  return rows;
}

std::vector<SweepRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Datasets data = build_datasets(config);
  const model::Ensemble ensemble = adversarial_train(config, data.train);
  return sweep(config, ensemble, data.test);
}

void sort_rows(std::vector<SweepRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.attack != b.attack) return a.attack < b.attack;
    return a.epsilon < b.epsilon;
  });
}

std::string format_csv(const std::vector<SweepRow>& rows) {
  std::string out = "task,attack,epsilon,mse_level,linf_level,metric,value,seed_count\n";
  for (const SweepRow& r : rows) {
    out += r.task + ',' + r.attack + ',' + fmt12(r.epsilon) + ',' + fmt12(r.mse_level) + ',' +
           fmt12(r.linf_level) + ',' + r.metric + ',' + fmt12(r.value) + ',' +
           std::to_string(r.seed_count) + '\n';
  }
  return out;
}

void write_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::string text = format_csv(rows);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path);
}

std::string format_metadata(const ExperimentConfig& config) {
  std::string out;
  out += "prng = " + std::string(CounterRng::kName) + '\n';
  out += "expectations = equal-weight means over test points and seeds\n";
  switch (config.report) {
    case ReportKind::loss_decomposition:
      out += "perturbation = one beta per point, generated against seed index " +
             std::to_string(config.deployed) + ", shared by all seeds\n";
      break;
    case ReportKind::accuracy_bv:
    case ReportKind::matched_compare:
      out += "perturbation = each seed attacked against its own parameters "
             "(regression compare: shared beta)\n";
      out += "accuracy_bias = mean accuracy across seeds (interpretation)\n";
      out += "accuracy_variance = sample variance of accuracy across seeds (interpretation)\n";
      break;
  }
  if (config.report == ReportKind::matched_compare) {
    out += "omitted_comparisons = adv-bnn (external method)\n";
  }
  out += "# config\n";
  out += format_config(config);
  return out;
}

}  // namespace bvlab::harness
