#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chstab/dynamics.hpp"
#include "chstab/grid.hpp"
#include "chstab/projections.hpp"

namespace chstab {

enum class RunMode { free, controlled };

std::string to_string(RunMode m);
RunMode parse_run_mode(const std::string& s);

/// Everything needed to reproduce a run. All quantities are dimensionless.
struct RunConfig {
  GridSpec grid{2, {1.0, 1.0}, {96, 96}};
  PhysParams physics;
  /// Constant external forces; nodal fields are built from these at run time.
  double h1 = 0.0;
  double h2 = 0.0;
  SchemeConfig scheme;
  RunMode mode = RunMode::free;
  InitialKind initial = InitialKind::reference;
  int level = 2;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  DAForm da = DAForm::paper;
  VForm vform = VForm::stiffness;
  std::string output_dir = "runs/default";

  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
  bool operator==(const RunConfig& other) const;
};

/// Parse failure with the offending line number (0 when not line-specific).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

/// Parses `key = value` lines; `#` starts a comment. The physics constants
/// nu0, nu1, nu2 and tau have no defaults and must be present.
RunConfig parse_config(std::istream& is, const std::string& source = "config");
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

std::vector<std::string> preset_names();
/// Named experiment presets. `paper_scale` switches from the desk profile
/// (96 x 96, dt = 1e-4) to 150 x 150 with dt = 5e-5.
RunConfig preset(const std::string& name, bool paper_scale = false);

}  // namespace chstab
