// bvlab: train ensembles, run epsilon sweeps and matched comparisons,
// decompose losses, and check invariants from a config file.
//
//   bvlab sweep --config configs/regression_fgsm.cfg --out sweep.csv
//
// Exit codes: 0 ok, 1 config error, 2 runtime error, 3 verify failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bvlab/common/error.hpp"
#include "bvlab/harness/config.hpp"
#include "bvlab/harness/experiment.hpp"
#include "bvlab/harness/verify.hpp"
#include "bvlab/model/serialize.hpp"

namespace {

using namespace bvlab;
using harness::ExperimentConfig;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kVerifyFailed = 3;

struct Common {
  std::string config_path;
  std::string out;
  std::string seeds;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config_path, "experiment config file")->required();
  auto* out = cmd->add_option("--out", c.out, needs_out ? "output directory" : "output CSV path");
  if (needs_out) out->required();
  cmd->add_option("--seeds", c.seeds, "comma-separated ensemble seeds (overrides config)");
  cmd->add_option("--threads", c.threads, "worker threads (overrides config)");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig config = harness::load_config(c.config_path);
  if (!c.seeds.empty()) {
    config.seeds.clear();
    std::size_t start = 0;
    while (start <= c.seeds.size()) {
      const auto comma = c.seeds.find(',', start);
      const std::string item = c.seeds.substr(start, comma - start);
      try {
        std::size_t used = 0;
        config.seeds.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("--seeds: bad seed '" + item + "'");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (c.threads > 0) config.threads = c.threads;
  if (!c.out.empty()) config.output = c.out;
  config.validate();
  return config;
}

void emit(const ExperimentConfig& config, const std::vector<harness::SweepRow>& rows) {
  if (config.output.empty()) {
    std::cout << harness::format_csv(rows);
    return;
  }
  harness::write_csv(rows, config.output);
  const std::string meta_path = config.output + ".meta";
  std::ofstream meta(meta_path, std::ios::binary | std::ios::trunc);
  if (!meta) throw Error("cannot open " + meta_path + " for writing");
  meta << harness::format_metadata(config);
  std::cerr << "wrote " << rows.size() << " rows to " << config.output << '\n';
}

int run_train(const Common& c) {
  const ExperimentConfig config = load(c);
  const auto data = harness::build_datasets(config);
  const auto ensemble = harness::adversarial_train(config, data.train);
  std::filesystem::create_directories(c.out);
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    const auto& m = ensemble.member(k);
    const std::string path =
        (std::filesystem::path(c.out) / ("member_" + std::to_string(m.seed()) + ".bvml")).string();
    model::save_model(m, path);
    const double last = m.loss_history().empty() ? 0.0 : m.loss_history().back();
    std::printf("seed %llu  final loss %.6g  -> %s\n", static_cast<unsigned long long>(m.seed()),
                last, path.c_str());
  }
  return kOk;
}

int run_sweep(const Common& c, std::optional<harness::ReportKind> force) {
  ExperimentConfig config = load(c);
  if (force) config.report = *force;
  config.validate();
  emit(config, harness::run_experiment(config));
  return kOk;
}

int run_decompose(const Common& c) {
  ExperimentConfig config = load(c);
  config.report = harness::ReportKind::loss_decomposition;
  config.attacks = {attack::AttackKind::none};
  config.epsilons = {0.0};
  emit(config, harness::run_experiment(config));
  return kOk;
}

int run_verify(const Common& c) {
  const ExperimentConfig config = load(c);
  bool all = true;
  for (const auto& check : harness::run_verify(config)) {
    std::printf("%s  %s  (%s)\n", check.passed ? "PASS" : "FAIL", check.name.c_str(),
                check.detail.c_str());
    all = all && check.passed;
  }
  return all ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bias-variance lab under adversarial perturbation"};
  app.require_subcommand(1);
  Common train_opts, sweep_opts, compare_opts, decompose_opts, verify_opts;
  auto* train = app.add_subcommand("train", "train the ensemble and save one model per seed");
  add_common(train, train_opts, true);
  auto* sweep = app.add_subcommand("sweep", "epsilon sweep; writes long-format CSV");
  add_common(sweep, sweep_opts, false);
  auto* compare = app.add_subcommand("compare", "attacks compared at matched perturbation levels");
  add_common(compare, compare_opts, false);
  auto* decompose = app.add_subcommand("decompose", "clean loss decomposition");
  add_common(decompose, decompose_opts, false);
  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  add_common(verify, verify_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return run_train(train_opts);
    if (*sweep) return run_sweep(sweep_opts, std::nullopt);
    if (*compare) return run_sweep(compare_opts, harness::ReportKind::matched_compare);
    if (*decompose) return run_decompose(decompose_opts);
    if (*verify) return run_verify(verify_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
