#pragma once

// Self-check suites run by `modalign verify`: analytic gradients against
// central finite differences, the optimal covariance map against its spectral
// predictions, and the ULGM momentum rule against its closed form.

#include <cstdint>
#include <string>
#include <vector>

namespace modalign {

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool passed() const;
  /// One aligned line per check: name, error, tolerance, PASS/FAIL, detail.
  std::string format() const;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;
/// Denominator floor of the relative error |a − n| / max(|a|, |n|, floor).
inline constexpr double kRelativeErrorFloor = 1e-6;

VerifyReport gradcheck(std::uint64_t seed);
VerifyReport verify_optimal_map(std::uint64_t seed);
VerifyReport verify_ulgm(std::uint64_t seed);

}  // namespace modalign
