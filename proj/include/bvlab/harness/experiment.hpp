#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/data/dataset.hpp"
#include "bvlab/harness/config.hpp"
#include "bvlab/model/ensemble.hpp"
#include "bvlab/model/train.hpp"

namespace bvlab::harness {

struct Datasets {
  data::LabeledDataset train;
  data::LabeledDataset test;
};

// Generates or loads the data named by the config.
Datasets build_datasets(const ExperimentConfig& config);

model::TrainConfig train_config(const ExperimentConfig& config);

// One member per seed. With train_attack set, every batch is perturbed
// against the member's current parameters; otherwise plain training.
model::Ensemble adversarial_train(const ExperimentConfig& config,
                                  const data::LabeledDataset& train);

// One CSV line of the long-format report.
struct SweepRow {
  std::string task;
  std::string attack;
  double epsilon = 0.0;
  double mse_level = 0.0;
  double linf_level = 0.0;
  std::string metric;
  double value = 0.0;
  std::size_t seed_count = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Metrics for one (attack, epsilon) cell.
struct Evaluation {
  double mse_level = 0.0;
  double linf_level = 0.0;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& name) const;
};

// Decomposition with one beta shared by all members, generated against
// member attack.deployed.
Evaluation evaluate_loss_decomposition(const model::Ensemble& ensemble,
                                       const data::LabeledDataset& test,
                                       const attack::AttackSpec& attack);

// Every member attacked against its own parameters; accuracy and loss
// statistics across members. mse_level is the mean over members.
Evaluation evaluate_accuracy(const model::Ensemble& ensemble, const data::LabeledDataset& test,
                             const attack::AttackSpec& attack, std::size_t threads = 1);

// Mean perturbation level reached by `attack`, measured the same way the
// corresponding evaluate_* call measures it.
double measure_level(const model::Ensemble& ensemble, const data::LabeledDataset& test,
                     const attack::AttackSpec& attack, bool per_member, std::size_t threads = 1);

struct GridEntry {
  attack::AttackSpec attack;
  std::vector<double> epsilons;
};

std::vector<GridEntry> attack_grid(const ExperimentConfig& config);

std::vector<SweepRow> accuracy_bias_variance(const model::Ensemble& ensemble,
                                             const data::LabeledDataset& test,
                                             const std::vector<GridEntry>& grid,
                                             const std::string& task, std::size_t threads = 1);

// One block of rows per (attack, epsilon) for the config's report kind.
std::vector<SweepRow> sweep(const ExperimentConfig& config, const model::Ensemble& ensemble,
                            const data::LabeledDataset& test);

// Target levels come from config.levels, or from the first attack on the
// epsilon grid. Each attack's epsilon is bisected until its level is
// within config.match_tolerance (relative) of the target; rows that miss
// carry matched = 0.
std::vector<SweepRow> matched_perturbation_compare(const ExperimentConfig& config,
                                                   const model::Ensemble& ensemble,
                                                   const data::LabeledDataset& test);

// Builds data, trains, and runs the report kind named in the config.
std::vector<SweepRow> run_experiment(const ExperimentConfig& config);

// Stable sort by (attack, epsilon); metric order within a cell is kept.
void sort_rows(std::vector<SweepRow>& rows);

std::string format_csv(const std::vector<SweepRow>& rows);
void write_csv(const std::vector<SweepRow>& rows, const std::string& path);

// key = value lines describing how the numbers were produced.
std::string format_metadata(const ExperimentConfig& config);

}  // namespace bvlab::harness
