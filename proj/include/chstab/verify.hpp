#pragma once

#include <string>
#include <vector>

namespace chstab {

enum class VerifyLevel { fast, full };
enum class Fault { none, flip_gain_sign };

VerifyLevel parse_verify_level(const std::string& s);
Fault parse_fault(const std::string& s);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the invariant suites of all modules. `fault` deliberately corrupts an
/// input so the matching check must fail.
std::vector<CheckResult> run_verification(VerifyLevel level, Fault fault = Fault::none);

}  // namespace chstab
