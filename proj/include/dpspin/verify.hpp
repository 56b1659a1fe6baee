#pragma once

// Acceptance battery: ten pass/fail criteria, each reported with a digest of
// every number it computed so reruns can be compared byte for byte.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpspin/order_parameter.hpp"

namespace dpspin {

enum class VerifyLevel { Quick, Full };

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  std::string digest;  // FNV-1a over the canonical text of all computed numbers
  double seconds = 0.0;
};

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::Full;
  std::uint64_t seed = 20240917;
  std::vector<double> pd_zetas{0.3, 0.5, 0.7};
  int workers = 8;                 // worker count of the primary pass
  bool check_determinism = true;   // criterion 10: rerun 1..9 with 1 and 8 workers
  std::vector<int> only;           // empty: every criterion
  std::function<void(const CheckResult&)> on_result;
};

inline constexpr int kCriterionCount = 10;

/// Criteria 1..9. Module exceptions become a failed result carrying the message.
CheckResult run_criterion(int id, const VerifyOptions& options);

/// Runs the selected criteria in order, then the determinism rerun when enabled.
std::vector<CheckResult> run_acceptance(const VerifyOptions& options);

/// Closed-form kernels used by the symmetry criterion: three odd in x, three shifted.
std::vector<KernelSpec> default_symmetry_battery();

/// "[PASS] 3 PD moment identity (12.3 s): detail".
std::string format_line(const CheckResult& result);

}  // namespace dpspin
