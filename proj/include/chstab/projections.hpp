#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "chstab/actuators.hpp"
#include "chstab/grid.hpp"

namespace chstab {

/// Quadratic form standing in for the D(A) norm in the order-parameter gain.
///  - paper: S M^{-1} S (default)
///  - full:  (S+M) M^{-1} (S+M), i.e. A_D = S + M
enum class DAForm { paper, full };

/// Quadratic form standing in for the V norm in the heat gain.
///  - stiffness: S alone (default)
///  - shifted:   S + M
enum class VForm { stiffness, shifted };

std::string to_string(DAForm f);
std::string to_string(VForm f);
DAForm parse_da_form(const std::string& s);
VForm parse_v_form(const std::string& s);

/// Inverses of the actuator/auxiliary Gram matrices G = [U]^T M [U~].
struct CouplingMatrices {
  Matrix order_gram;     // G_1
  Matrix order_inverse;  // Q_1
  Matrix heat_gram;      // G_2
  Matrix heat_inverse;   // Q_2

  const Matrix& inverse(Family f) const { return f == Family::order ? order_inverse : heat_inverse; }
  const Matrix& gram(Family f) const { return f == Family::order ? order_gram : heat_gram; }
};

/// Throws std::runtime_error when a diagonal entry of G falls below
/// `floor_factor * |Omega|`, which means a box is not resolved by the mesh.
CouplingMatrices assemble_coupling(const ActuatorFamily& fam, const GridOperators& ops,
                                   double floor_factor = 1e-14);

/// Oblique projection onto span[U~] along the M-orthogonal complement of span[U]:
/// returns [U~] Q [U]^T M y.
Vector project_tilde(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                     const GridOperators& ops, const Vector& y, Family which);

/// The adjoint projection onto span[U] along the complement of span[U~]:
/// returns [U] Q^T [U~]^T M y.
Vector project_actuator(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                        const GridOperators& ops, const Vector& y, Family which);

/// Precomputed input-coordinate gains.
///
///   order_gain = -lambda_1 Q_1^T R_1 Q_1 [U]^T M,   R_1 = [U~]^T K_DA [U~]
///   heat_gain  = -lambda_2 Q_2^T R_2 Q_2 [V]^T M,   R_2 = [V~]^T K_V  [V~]
///
/// where K_DA and K_V are selected by `da` and `vform`.
struct FeedbackGains {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  DAForm da = DAForm::paper;
  VForm vform = VForm::stiffness;
  Matrix order_gain;  // M_sigma x N
  Matrix heat_gain;   // M_varsigma x N
  Matrix order_form;  // R_1
  Matrix heat_form;   // R_2
  Matrix order_core;  // Q_1^T R_1 Q_1
  Matrix heat_core;   // Q_2^T R_2 Q_2

  const Matrix& gain(Family f) const { return f == Family::order ? order_gain : heat_gain; }
  const Matrix& core(Family f) const { return f == Family::order ? order_core : heat_core; }
  double lambda(Family f) const { return f == Family::order ? lambda1 : lambda2; }
};

FeedbackGains build_gains(const ActuatorFamily& fam, const GridOperators& ops,
                          const CouplingMatrices& coupling, double lambda1, double lambda2,
                          DAForm da = DAForm::paper, VForm vform = VForm::stiffness);

struct FeedbackLoad {
  Vector coords;  // input coordinates u (or v)
  Vector load;    // M [U] u, the weak-form right-hand side contribution
};

FeedbackLoad feedback_load(const FeedbackGains& gains, const ActuatorFamily& fam,
                           const GridOperators& ops, const Vector& diff, Family which);

/// Operator norm in L(H) of the oblique projection P_{U~}^{U-perp}, from the
/// reduced (actuator-count sized) eigenproblem.
double projection_operator_norm(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                                const GridOperators& ops, Family which);

/// Applies the quadratic form K_DA (or K_V) selected by the flags.
Vector apply_da_form(const GridOperators& ops, DAForm da, const Vector& u);
Vector apply_v_form(const GridOperators& ops, VForm vf, const Vector& u);

// Gain cache: a versioned binary container keyed by grid fingerprint, level,
// gains and form flags.

struct GainsKey {
  std::uint64_t grid = 0;
  int level = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  DAForm da = DAForm::paper;
  VForm vform = VForm::stiffness;

  bool operator==(const GainsKey&) const = default;
  std::string file_stem() const;
};

void save_gains(const std::filesystem::path& path, const GainsKey& key, const FeedbackGains& gains);
/// Returns nothing when the file is missing, has another version, or a different key.
std::optional<FeedbackGains> load_gains(const std::filesystem::path& path, const GainsKey& key);

/// Builds gains, going through the cache directory given by CHSTAB_CACHE_DIR
/// (or `cache_dir` when set). Without a directory no caching happens.
FeedbackGains cached_gains(const ActuatorFamily& fam, const GridOperators& ops,
                           const CouplingMatrices& coupling, double lambda1, double lambda2,
                           DAForm da, VForm vform,
                           std::optional<std::filesystem::path> cache_dir = std::nullopt);

}  // namespace chstab
