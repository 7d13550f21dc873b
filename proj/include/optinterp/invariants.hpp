#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace optinterp {

struct CheckResult {
  std::string module;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct InvariantOptions {
  std::uint64_t seed = 0;
  /// Multiplies every tolerance; values below 1 tighten the suite.
  double tolerance_scale = 1.0;
  unsigned threads = 1;
};

/// Runs the property checks of every module at desk scale. Failures and
/// exceptions are reported as failed checks, never thrown.
std::vector<CheckResult> run_invariant_suite(const InvariantOptions& opts = {});

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace optinterp
