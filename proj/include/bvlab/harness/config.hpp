#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bvlab/attack/spec.hpp"
#include "bvlab/model/mlp.hpp"

namespace bvlab::harness {

enum class Task { regression, classification, cifar_subset };
enum class ReportKind { loss_decomposition, accuracy_bv, matched_compare };

std::string_view to_string(Task task);
std::string_view to_string(ReportKind kind);

// Everything one experiment run needs. Parsed from a flat key = value
// file; see README for the key list.
struct ExperimentConfig {
  Task task = Task::regression;
  ReportKind report = ReportKind::loss_decomposition;

  // Data.
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t data_seed = 1;
  // Regression.
  std::vector<double> weights{2.0, -3.0};
  double intercept = 0.5;
  double noise_halfwidth = 0.5;
  double box = 1.0;
  // Train on noiseless targets (noise only in the test set).
  bool noiseless_train = false;
  // Two Gaussians.
  std::size_t dim = 50;
  double mean0 = 0.0;
  double mean1 = 10.0;
  double sd = 1.0;
  // Map inputs to zero mean, unit spread per coordinate (statistics from
  // the training split); classification tasks only.
  bool standardize = false;
  // CIFAR subset.
  std::string cifar_path;
  std::size_t cifar_limit = 0;
  double test_fraction = 0.2;

  // Model. Unset hidden means the task default.
  std::optional<std::vector<std::size_t>> hidden;
  model::Activation activation = model::Activation::sigmoid;

  // Training. Zero epochs means the task default.
  double learning_rate = 0.01;
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  attack::AttackKind train_attack = attack::AttackKind::none;
  double train_epsilon = 0.0;
  std::size_t train_steps = 5;
  bool mix_clean = false;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t threads = 1;

  // Evaluation grid.
  std::vector<attack::AttackKind> attacks{attack::AttackKind::fgsm};
  std::vector<double> epsilons{0.0};
  std::size_t pgd_steps = 5;
  std::optional<double> pgd_step_size;
  std::optional<double> linf_bound;
  // Clamp attacked inputs to the valid pixel range (CIFAR only).
  bool clamp = false;
  std::size_t deployed = 0;

  // Matched comparison. Empty levels means the levels reached by the
  // first attack on the epsilon grid.
  std::vector<double> levels;
  double match_tolerance = 0.05;
  std::size_t max_bisection = 50;

  std::string output;

  // Throws ConfigError.
  void validate() const;

  std::vector<std::size_t> hidden_layers() const;
  std::size_t train_epochs() const;
  model::MlpSpec model_spec(std::size_t input_dim, std::size_t classes) const;
  // Attack template for the evaluation grid (epsilon left at 0).
  attack::AttackSpec attack_template(attack::AttackKind kind) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Parses the text form. Lines are `key = value`; `#` starts a comment;
// lists are comma separated. Unknown or repeated keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Canonical text form; parse_config(format_config(c)) == c.
std::string format_config(const ExperimentConfig& config);

}  // namespace bvlab::harness
