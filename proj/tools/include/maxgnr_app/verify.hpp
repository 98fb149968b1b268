#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace maxgnr::app {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double expected = 0.0;
  std::string detail;
};

struct VerifyOptions {
  /// Runs only checks whose name contains this text; empty runs all.
  std::string filter;
  /// Predicted stationary variance ratio of the momentum estimate, as a
  /// function of gamma. Replaceable so tests can plant a wrong law.
  std::function<double(double)> contraction_factor;
  std::uint64_t seed = 20240601;
};

/// Names of all checks, in execution order.
std::vector<std::string> verify_check_names();

std::vector<CheckResult> run_checks(const VerifyOptions& options);

/// Prints the pass/fail table and returns 0 iff every selected check passed,
/// 1 otherwise (including an empty selection).
int report_checks(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace maxgnr::app
