#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bvlab::attack {

enum class AttackKind { none, fgsm, pgd, bv, bias_dir, var_dir };

std::string_view to_string(AttackKind kind);
// Accepts the names printed by to_string ("fgsm", "bias-dir", ...).
AttackKind parse_attack_kind(std::string_view name);

// Valid input interval. A single-element bound broadcasts over all
// coordinates; otherwise one bound per coordinate.
struct ClampRange {
  std::vector<double> lower;
  std::vector<double> upper;

  static ClampRange uniform(double lo, double hi) { return {{lo}, {hi}}; }
  double lower_at(std::size_t i) const { return lower.size() == 1 ? lower[0] : lower[i]; }
  double upper_at(std::size_t i) const { return upper.size() == 1 ? upper[0] : upper[i]; }
};

struct AttackSpec {
  AttackKind kind = AttackKind::none;
  double epsilon = 0.0;
  // PGD only.
  std::size_t steps = 5;
  // PGD only; unset means epsilon / 4.
  std::optional<double> step_size;
  // Cap on ||beta||_inf.
  std::optional<double> linf_bound;
  std::optional<ClampRange> clamp;
  // Member attacked by var-dir (and by decompositions needing one model).
  std::size_t deployed = 0;

  double effective_step_size() const { return step_size.value_or(epsilon / 4.0); }

  // Throws ConfigError when an invariant fails.
  void validate() const;

  AttackSpec with_epsilon(double eps) const {
    AttackSpec copy = *this;
    copy.epsilon = eps;
    return copy;
  }
};

}  // namespace bvlab::attack
