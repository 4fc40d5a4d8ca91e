#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chstab/actuators.hpp"
#include "chstab/dynamics.hpp"
#include "chstab/grid.hpp"
#include "chstab/projections.hpp"
#include "chstab/run.hpp"

namespace chstab {

struct DecayReport {
  double rate = 0.0;  // mu-hat, minus the slope of log ||z||
  double t_start = 0.0;
  double t_end = 0.0;
  double residual = 0.0;  // RMS residual of the log-linear fit
  int samples = 0;
  /// Earliest sample time from which the series never increases (within the
  /// relative slack); empty if the last step increases.
  std::optional<double> monotone_after;
};

/// Least-squares fit of log(norm) = a - rate * t over samples with t in [t_a, t_b].
/// Throws std::invalid_argument with fewer than 10 samples or nonpositive norms.
DecayReport fit_decay(const std::vector<double>& t, const std::vector<double>& norm, double t_a,
                      double t_b, double slack = 0.0);
/// Same for a run's ||z||_{H x H} series; default window [0.1 T, T].
DecayReport fit_decay(const RunRecord& record, std::optional<std::pair<double, double>> window = std::nullopt,
                      double slack = 0.0);

/// Earliest t_k such that norm[j+1] <= (1 + slack) norm[j] for all j >= k.
std::optional<double> monotone_after(const std::vector<double>& t, const std::vector<double>& norm,
                                     double slack = 0.0);

/// nu2 ||w1||_V^2 + 2 \int F(w1) + rho ||w2||_H^2.
double free_energy(const SimState& state, const PhysParams& params, const GridOperators& ops,
                   double rho = 1.0);

/// Sum over steps of (|u^n|^2 + |v^n|^2) dt.
double control_energy(const RunRecord& record);

struct ControlEnergyReport {
  double energy = 0.0;
  double rate = 0.0;                 // mu-hat used in the bound
  double initial_norm_sq = 0.0;      // ||z(0)||^2_{H x H}
  double order_coord_norm_sq = 0.0;  // ||(U^)^{-1}||^2 = 1 / lambda_min([U]^T M [U])
  double heat_coord_norm_sq = 0.0;
  double order_operator_norm = 0.0;  // ||P A^2 P~||_{L(H)}
  double heat_operator_norm = 0.0;   // ||P A P~||_{L(H)}
  double order_projection_norm = 0.0;
  double heat_projection_norm = 0.0;
  double order_restricted_norm = 0.0;  // ||A^2 restricted to span U~||
  double heat_restricted_norm = 0.0;   // ||A restricted to span V~||
  double constant = 0.0;               // D = sum lambda^2 ||coord||^2 ||operator||^2
  double product_constant = 0.0;       // same with ||P||^4 ||A^k|_~||^2 in place of ||operator||^2
  double bound = 0.0;                  // constant ||z(0)||^2 / (2 rate)
  bool within_bound() const { return energy <= bound; }
};

/// Evaluates the input-energy bound for a controlled run. Needs a positive rate.
ControlEnergyReport control_energy_report(const RunRecord& record, const FeedbackSetup& setup,
                                          const GridOperators& ops, double rate);

enum class GapNorm { H, V };

/// Smallest eigenvalue of the pencil (Z^T A Z, Z^T B Z), where the columns of Z
/// are an orthonormal basis of {w : C^T w = 0}. `variant` selects one of two
/// different orthonormalizations of the same subspace (the result must not
/// depend on it). An empty C means no constraint.
double constrained_min_ratio(const Matrix& a, const Matrix& b, const Matrix& c, int variant = 0);

/// Discrete spectral-gap constant on fields orthogonal to the actuators:
///  - H: min ||w||_V^2 / ||w||_H^2 subject to [V]^T M w = 0
///  - V: min ||w||_{D(A)}^2 / ||w||_V^2 subject to [U]^T M w = 0
/// Dense algebra; meant for grids with at most a few thousand nodes.
double estimate_alpha(const ActuatorFamily& fam, const GridOperators& ops, GapNorm which,
                      DAForm da = DAForm::full, int variant = 0);

/// Smallest generalized eigenvalue of (K + 2 lambda1 P^T K P, S + M), with
/// K the D(A) form and P = [U~] Q_1 [U]^T M.
double feedback_gap_minimum(const ActuatorFamily& fam, const GridOperators& ops, double lambda1,
                       DAForm da = DAForm::full);

struct GapReport {
  int level = 0;
  double alpha_H = 0.0;
  double alpha_V = 0.0;
  std::vector<std::pair<double, double>> xi_min;  // (lambda1, xi_min)
};

GapReport gap_report(int level, const GridOperators& ops, const std::vector<double>& lambdas,
                     DAForm da = DAForm::full);

/// CSV with columns M, alpha_H, alpha_V, then xi_min_lambda<value> per lambda.
void write_gap_csv(std::ostream& os, const std::vector<GapReport>& reports);
std::string gap_summary(const std::vector<GapReport>& reports);

}  // namespace chstab
