#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chstab/actuators.hpp"
#include "chstab/grid.hpp"
#include "chstab/projections.hpp"

namespace chstab {

/// g(w) = a0 + a1 w + a2 w (|w| - 1), evaluated nodewise. Coefficients are
/// constants unless the matching field is non-empty.
struct GFamily {
  double a0 = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  Vector a0_field;
  Vector a1_field;
  Vector a2_field;
};

struct PhysParams {
  double nu0 = 0.1;
  double nu1 = 1.0;
  double nu2 = 0.005;  ///< interface stiffness, must be > 0
  double tau = 2.0;    ///< potential scale, f(y) = tau y (y^2 - 1)
  std::optional<GFamily> g;
  Vector h1;  ///< nodal external force; empty means zero
  Vector h2;

  void validate() const;
};

enum class FeedbackTreatment { explicit_, implicit };
enum class LinearSolver { direct, iterative };

std::string to_string(FeedbackTreatment f);
std::string to_string(LinearSolver s);
FeedbackTreatment parse_feedback_treatment(const std::string& s);
LinearSolver parse_linear_solver(const std::string& s);

struct SchemeConfig {
  double dt = 1e-4;
  double final_time = 1.0;
  FeedbackTreatment feedback = FeedbackTreatment::implicit;
  LinearSolver solver = LinearSolver::direct;
  double solve_tolerance = 1e-10;
  int snapshot_stride = 0;  ///< 0 disables snapshots

  int step_count() const;
  /// Throws when dt exceeds twice the stability threshold 4 nu2 / tau.
  /// Returns a warning message when dt is at or above the threshold itself.
  std::optional<std::string> validate(const PhysParams& params) const;
};

/// Order parameter w1, temperature-like w2 = y2 + nu0 y1, and the chemical
/// potential p (algebraic, recomputed every step).
struct SimState {
  double t = 0.0;
  Vector w1;
  Vector w2;
  Vector p;
};

enum class InitialKind { reference, controlled };

std::string to_string(InitialKind k);
InitialKind parse_initial_kind(const std::string& s);

/// Pointwise convex-concave split of f(y) = tau y (y^2 - 1):
/// explicit part tau y (y^2 - 3), implicit part 2 tau y.
inline double f_full(double y, double tau) { return tau * y * (y * y - 1.0); }
inline double f_explicit(double y, double tau) { return tau * y * (y * y - 3.0); }
inline double f_implicit(double y, double tau) { return 2.0 * tau * y; }
/// Double-well F(y) = (tau/4) (1 - y^2)^2.
inline double double_well(double y, double tau) {
  const double s = 1.0 - y * y;
  return 0.25 * tau * s * s;
}

std::pair<Vector, Vector> f_split(const Vector& y, double tau);
Vector g_eval(const GFamily& gf, const Vector& w);

/// w = (y1, y2 + nu0 y1) and its inverse.
std::pair<Vector, Vector> transform_to_w(const Vector& y1, const Vector& y2, double nu0);
std::pair<Vector, Vector> transform_to_y(const Vector& w1, const Vector& w2, double nu0);

/// Chemical potential from M p = nu2 S w1 + nu0 nu1 M w1 + \int f(w1) phi.
Vector chemical_potential(const GridOperators& ops, const PhysParams& params, const Vector& w1);

SimState initial_state(InitialKind kind, const GridOperators& ops, const PhysParams& params);

/// (nu2/2) w1^T S w1 + \int F(w1), the Lyapunov functional of the isothermal scheme.
double isothermal_energy(const GridOperators& ops, const PhysParams& params, const Vector& w1);

/// Actuators and gains needed to apply feedback inside the stepper.
struct FeedbackSetup {
  ActuatorFamily family;
  CouplingMatrices coupling;
  FeedbackGains gains;
};

struct StepInputs {
  Vector order;  // u
  Vector heat;   // v
};

class StepError : public std::runtime_error {
 public:
  StepError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Semi-implicit Euler with convex-concave splitting.
///
/// Stage A solves the mixed system for (w1^{n+1}, p^{n+1}):
///   M (w1^{n+1} - w1^n)/dt = -S p^{n+1} + nu1 S w2^n - M g(w1^n) + M h1 + b1
///   M p^{n+1} = nu2 S w1^{n+1} + (nu0 nu1 + 2 tau) M w1^{n+1} + \int f_e(w1^n) phi
/// Stage B solves
///   M (w2^{n+1} - w2^n)/dt = -S w2^{n+1} + nu0 S w1^{n+1} + M h2 + b2.
/// Feedback loads b_j = M [U] F_j (w_j - w_rj) use the state at t^n
/// (explicit) or t^{n+1} (implicit). Both stage matrices are constant in time
/// and factored once; implicit feedback enters as a low-rank Woodbury update.
class Stepper {
 public:
  Stepper(const GridOperators& ops, PhysParams params, SchemeConfig scheme,
          std::shared_ptr<const FeedbackSetup> feedback = nullptr);
  ~Stepper();
  Stepper(Stepper&&) noexcept;
  Stepper& operator=(Stepper&&) = delete;

  /// Advances one step. With feedback, `ref_now` (explicit) or `ref_next`
  /// (implicit) must be the reference state at the matching time.
  SimState step(const SimState& state, const SimState* ref_now = nullptr,
                const SimState* ref_next = nullptr, StepInputs* inputs = nullptr) const;

  const PhysParams& params() const { return params_; }
  const SchemeConfig& scheme() const { return scheme_; }
  bool has_feedback() const { return feedback_ != nullptr; }
  const FeedbackSetup* feedback() const { return feedback_.get(); }

 private:
  struct Impl;
  const GridOperators& ops_;
  PhysParams params_;
  SchemeConfig scheme_;
  std::shared_ptr<const FeedbackSetup> feedback_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace chstab
