#pragma once

#include <string>
#include <vector>

#include "bvlab/harness/config.hpp"

namespace bvlab::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Invariant suite for the config's task: data determinism, gradients
// against finite differences, attack conformance, clean identities on a
// trained ensemble, serialization and CSV determinism.
std::vector<CheckResult> run_verify(const ExperimentConfig& config);

}  // namespace bvlab::harness
