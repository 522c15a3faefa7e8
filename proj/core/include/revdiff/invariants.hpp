#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace revdiff {

struct InvariantResult {
  bool pass = false;
  std::string detail;
};

struct Invariant {
  std::string group;
  std::string name;
  std::function<InvariantResult()> fn;
};

// Groups: core, kernels, oracle, conversions, losses, train, samplers, eval.
const std::vector<Invariant>& invariant_registry();

struct InvariantOutcome {
  const Invariant* invariant = nullptr;
  InvariantResult result;
  double seconds = 0.0;
};

// Exceptions thrown by a check count as failures.
std::vector<InvariantOutcome> run_invariants(const std::optional<std::string>& group = std::nullopt);

}  // namespace revdiff
