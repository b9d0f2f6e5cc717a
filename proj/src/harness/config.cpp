#include "bvlab/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "bvlab/common/error.hpp"

namespace bvlab::harness {

using attack::AttackKind;

std::string_view to_string(Task task) {
  switch (task) {
    case Task::regression: return "regression";
    case Task::classification: return "classification";
    case Task::cifar_subset: return "cifar-subset";
  }
  return "?";
}

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::loss_decomposition: return "loss-decomposition";
    case ReportKind::accuracy_bv: return "accuracy-bv";
    case ReportKind::matched_compare: return "matched-compare";
  }
  return "?";
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t to_unsigned(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

Task to_task(std::string_view s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  if (s == "cifar-subset") return Task::cifar_subset;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

ReportKind to_report(std::string_view s) {
  if (s == "loss-decomposition") return ReportKind::loss_decomposition;
  if (s == "accuracy-bv") return ReportKind::accuracy_bv;
  if (s == "matched-compare") return ReportKind::matched_compare;
  throw ConfigError("unknown report kind '" + std::string(s) + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& each) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += each(values[i]);
  }
  return out;
}

std::string fmt_doubles(const std::vector<double>& v) { return join(v, fmt); }

template <typename T>
std::string fmt_unsigned(const std::vector<T>& v) {
  return join(v, [](T x) { return std::to_string(x); });
}

std::vector<double> to_doubles(std::string_view s) {
  std::vector<double> out;
  for (auto item : split_list(s)) out.push_back(to_double(item));
  return out;
}

template <typename T>
std::vector<T> to_unsigneds(std::string_view s) {
  std::vector<T> out;
  for (auto item : split_list(s)) out.push_back(static_cast<T>(to_unsigned(item)));
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

#define BV_DOUBLE(key, field)                                                    \
  Key{key, [](ExperimentConfig& c, std::string_view v) { c.field = to_double(v); }, \
      [](const ExperimentConfig& c) -> std::optional<std::string> { return fmt(c.field); }}
#define BV_SIZE(key, field)                                                                   \
  Key{key,                                                                                    \
      [](ExperimentConfig& c, std::string_view v) {                                           \
        c.field = static_cast<decltype(c.field)>(to_unsigned(v));                             \
      },                                                                                      \
      [](const ExperimentConfig& c) -> std::optional<std::string> {                          \
        return std::to_string(c.field);                                                       \
      }}
#define BV_BOOL(key, field)                                                                    \
  Key{key, [](ExperimentConfig& c, std::string_view v) { c.field = to_bool(v); },             \
      [](const ExperimentConfig& c) -> std::optional<std::string> {                           \
        return std::string(c.field ? "true" : "false");                                       \
      }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      Key{"task", [](ExperimentConfig& c, std::string_view v) { c.task = to_task(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::string(to_string(c.task));
          }},
      Key{"report", [](ExperimentConfig& c, std::string_view v) { c.report = to_report(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::string(to_string(c.report));
          }},
      BV_SIZE("n_train", n_train),
      BV_SIZE("n_test", n_test),
      BV_SIZE("data_seed", data_seed),
      Key{"weights", [](ExperimentConfig& c, std::string_view v) { c.weights = to_doubles(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return fmt_doubles(c.weights);
          }},
      BV_DOUBLE("intercept", intercept),
      BV_DOUBLE("noise_halfwidth", noise_halfwidth),
      BV_DOUBLE("box", box),
      BV_BOOL("noiseless_train", noiseless_train),
      BV_BOOL("standardize", standardize),
      BV_SIZE("dim", dim),
      BV_DOUBLE("mean0", mean0),
      BV_DOUBLE("mean1", mean1),
      BV_DOUBLE("sd", sd),
      Key{"cifar_path", [](ExperimentConfig& c, std::string_view v) { c.cifar_path = v; },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (c.cifar_path.empty()) return std::nullopt;
            return c.cifar_path;
          }},
      BV_SIZE("cifar_limit", cifar_limit),
      BV_DOUBLE("test_fraction", test_fraction),
      Key{"hidden",
          [](ExperimentConfig& c, std::string_view v) {
            c.hidden = to_unsigneds<std::size_t>(v);
          },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!c.hidden) return std::nullopt;
            return fmt_unsigned(*c.hidden);
          }},
      Key{"activation",
          [](ExperimentConfig& c, std::string_view v) {
            c.activation = model::parse_activation(v);
          },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::string(model::to_string(c.activation));
          }},
      BV_DOUBLE("learning_rate", learning_rate),
      BV_SIZE("epochs", epochs),
      BV_SIZE("batch_size", batch_size),
      Key{"train_attack",
          [](ExperimentConfig& c, std::string_view v) {
            c.train_attack = attack::parse_attack_kind(v);
          },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::string(attack::to_string(c.train_attack));
          }},
      BV_DOUBLE("train_epsilon", train_epsilon),
      BV_SIZE("train_steps", train_steps),
      BV_BOOL("mix_clean", mix_clean),
      Key{"seeds",
          [](ExperimentConfig& c, std::string_view v) {
            c.seeds = to_unsigneds<std::uint64_t>(v);
          },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return fmt_unsigned(c.seeds);
          }},
      BV_SIZE("threads", threads),
      Key{"attacks",
          [](ExperimentConfig& c, std::string_view v) {
            c.attacks.clear();
            for (auto item : split_list(v)) c.attacks.push_back(attack::parse_attack_kind(item));
          },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return join(c.attacks, [](AttackKind k) { return std::string(attack::to_string(k)); });
          }},
      Key{"epsilons", [](ExperimentConfig& c, std::string_view v) { c.epsilons = to_doubles(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            return fmt_doubles(c.epsilons);
          }},
      BV_SIZE("pgd_steps", pgd_steps),
      Key{"pgd_step_size",
          [](ExperimentConfig& c, std::string_view v) { c.pgd_step_size = to_double(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!c.pgd_step_size) return std::nullopt;
            return fmt(*c.pgd_step_size);
          }},
      Key{"linf_bound",
          [](ExperimentConfig& c, std::string_view v) { c.linf_bound = to_double(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!c.linf_bound) return std::nullopt;
            return fmt(*c.linf_bound);
          }},
      BV_BOOL("clamp", clamp),
      BV_SIZE("deployed", deployed),
      Key{"levels", [](ExperimentConfig& c, std::string_view v) { c.levels = to_doubles(v); },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (c.levels.empty()) return std::nullopt;
            return fmt_doubles(c.levels);
          }},
      BV_DOUBLE("match_tolerance", match_tolerance),
      BV_SIZE("max_bisection", max_bisection),
      Key{"output", [](ExperimentConfig& c, std::string_view v) { c.output = v; },
          [](const ExperimentConfig& c) -> std::optional<std::string> {
            if (c.output.empty()) return std::nullopt;
            return c.output;
          }},
  };
  return table;
}

#undef BV_DOUBLE
#undef BV_SIZE
#undef BV_BOOL

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (n_test < 1 || n_train < 1) throw ConfigError("n_train and n_test must be >= 1");
  if (epsilons.empty()) throw ConfigError("epsilons: list is empty");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (epsilons[i] < 0.0) throw ConfigError("epsilons must be non-negative");
    if (i > 0 && epsilons[i] < epsilons[i - 1]) throw ConfigError("epsilons must be ascending");
  }
  if (attacks.empty()) throw ConfigError("attacks: list is empty");
  if (report == ReportKind::matched_compare && attacks.size() < 2) {
    throw ConfigError("matched-compare needs at least two attacks");
  }
  if (report == ReportKind::accuracy_bv && task == Task::regression) {
    throw ConfigError("accuracy-bv needs a classification task");
  }
  if (noise_halfwidth < 0.0) throw ConfigError("noise_halfwidth must be >= 0");
  if (task == Task::regression && weights.empty()) throw ConfigError("weights: list is empty");
  if (task == Task::classification && n_train % 2 != 0) throw ConfigError("n_train must be even");
  if (task == Task::classification && n_test % 2 != 0) throw ConfigError("n_test must be even");
  if (task == Task::cifar_subset && cifar_path.empty()) throw ConfigError("cifar_path is required");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (deployed >= seeds.size()) throw ConfigError("deployed must index a seed");
  if (!(match_tolerance > 0.0)) throw ConfigError("match_tolerance must be positive");
  for (double l : levels) {
    if (l < 0.0) throw ConfigError("levels must be non-negative");
  }
  if (train_attack == AttackKind::bias_dir || train_attack == AttackKind::var_dir) {
    throw ConfigError("train_attack must be none, fgsm, pgd or bv");
  }
  if (train_attack != AttackKind::none && !(train_epsilon > 0.0)) {
    throw ConfigError("train_epsilon must be positive when train_attack is set");
  }
  if (standardize && task == Task::regression) {
    throw ConfigError("standardize applies to classification tasks only");
  }
  if (clamp && task != Task::cifar_subset) throw ConfigError("clamp applies to cifar-subset only");
  model_spec(task == Task::regression ? weights.size() : dim,
             task == Task::regression ? 0 : 2)
      .validate();
}

std::vector<std::size_t> ExperimentConfig::hidden_layers() const {
  if (hidden) return *hidden;
  switch (task) {
    case Task::regression: return {100};
    case Task::classification: return {50, 100};
    case Task::cifar_subset: return {100};
  }
  return {};
}

std::size_t ExperimentConfig::train_epochs() const {
  if (epochs > 0) return epochs;
  return task == Task::regression ? 200 : 100;
}

model::MlpSpec ExperimentConfig::model_spec(std::size_t input_dim, std::size_t classes) const {
  model::MlpSpec spec;
  spec.input_dim = input_dim;
  spec.hidden = hidden_layers();
  spec.activation = activation;
  if (classes == 0) {
    spec.output_dim = 1;
    spec.head = model::Head::linear;
  } else {
    spec.output_dim = classes;
    spec.head = model::Head::softmax;
  }
  return spec;
}

attack::AttackSpec ExperimentConfig::attack_template(AttackKind kind) const {
  attack::AttackSpec spec;
  spec.kind = kind;
  spec.steps = pgd_steps;
  spec.step_size = pgd_step_size;
  spec.linf_bound = linf_bound;
  spec.deployed = deployed;
  return spec;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Key& k) { return key == k.name; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "key '" + std::string(key) + "' given twice");
    }
    try {
      it->set(config, value);
    } catch (const Error& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  for (const Key& key : keys()) {
    if (const auto value = key.get(config)) {
      out += key.name;
      out += " = ";
      out += *value;
      out += '\n';
    }
  }
  return out;
}

}  // namespace bvlab::harness
