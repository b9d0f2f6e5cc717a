#include "bvlab/attack/spec.hpp"

#include <cmath>

#include "bvlab/common/error.hpp"

namespace bvlab::attack {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::bv: return "bv";
    case AttackKind::bias_dir: return "bias-dir";
    case AttackKind::var_dir: return "var-dir";
  }
  return "none";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (AttackKind kind : {AttackKind::none, AttackKind::fgsm, AttackKind::pgd, AttackKind::bv,
                          AttackKind::bias_dir, AttackKind::var_dir}) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("attack epsilon must be a finite value >= 0");
  }
  if (kind == AttackKind::pgd) {
    if (steps < 1) throw ConfigError("pgd needs at least one step");
    if (step_size && !(*step_size >= 0.0)) throw ConfigError("pgd step size must be >= 0");
  }
  if (linf_bound && !(*linf_bound > 0.0)) throw ConfigError("l-inf bound must be positive");
  if (linf_bound && (kind == AttackKind::fgsm || kind == AttackKind::pgd) &&
      epsilon > *linf_bound) {
    throw ConfigError("epsilon " + std::to_string(epsilon) + " exceeds the l-inf bound " +
                      std::to_string(*linf_bound));
  }
  if (clamp) {
    if (clamp->lower.empty() || clamp->lower.size() != clamp->upper.size()) {
      throw ConfigError("clamp range needs matching, non-empty lower/upper bounds");
    }
    for (std::size_t i = 0; i < clamp->lower.size(); ++i) {
      if (clamp->lower[i] > clamp->upper[i]) throw ConfigError("clamp range is inverted");
    }
  }
}

}  // namespace bvlab::attack
