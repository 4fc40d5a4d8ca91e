#include "chstab/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace chstab {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Matrix dense(const SparseMatrix& s) { return Matrix(s); }

Matrix dense_da_form(const GridOperators& ops, DAForm da) {
  const Matrix k = dense(da == DAForm::paper ? ops.stiffness() : ops.shifted());
  Matrix form = k * ops.solve_mass(k);
  return 0.5 * (form + form.transpose());
}

double smallest_pencil_eigenvalue(const Matrix& a, const Matrix& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()),
                                                       Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) throw std::runtime_error("generalized eigenproblem did not converge");
  return eig.eigenvalues()[0];
}

double largest_pencil_eigenvalue(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return 0.0;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()),
                                                       Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) throw std::runtime_error("generalized eigenproblem did not converge");
  return eig.eigenvalues()[a.rows() - 1];
}

// ||P A^k P~||_{L(H)} = lambda_max(core * [U]^T M [U]) for the symmetric core Q^T R Q.
double operator_norm(const Matrix& core, const Matrix& gram) {
  if (core.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("actuator Gram matrix is not SPD");
  const Matrix l = llt.matrixL();
  const Matrix sym = l.transpose() * core * l;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

}  // namespace

std::optional<double> monotone_after(const std::vector<double>& t, const std::vector<double>& norm,
                                     double slack) {
  if (t.size() != norm.size()) throw std::invalid_argument("time and norm series differ in length");
  if (t.empty()) return std::nullopt;
  for (std::size_t j = norm.size() - 1; j-- > 0;) {
    if (norm[j + 1] > (1.0 + slack) * norm[j]) {
      if (j + 2 == norm.size()) return std::nullopt;
      return t[j + 1];
    }
  }
  return t.front();
}

DecayReport fit_decay(const std::vector<double>& t, const std::vector<double>& norm, double t_a,
                      double t_b, double slack) {
  if (t.size() != norm.size()) throw std::invalid_argument("time and norm series differ in length");
  if (!(t_b > t_a)) throw std::invalid_argument("empty fit window");
  // Half a step of tolerance on the window edges.
  const double eps = 1e-9 * std::max(1.0, std::abs(t_b));
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_a - eps || t[k] > t_b + eps) continue;
    if (!(norm[k] > 0.0)) throw std::invalid_argument("decay fit needs positive norms");
    xs.push_back(t[k]);
    ys.push_back(std::log(norm[k]));
  }
  if (xs.size() < 10) throw std::invalid_argument("decay fit needs at least 10 samples in the window");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
  }
  const double slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = ys[k] - (my + slope * (xs[k] - mx));
    ss += r * r;
  }
  DecayReport rep;
  rep.rate = -slope;
  rep.t_start = xs.front();
  rep.t_end = xs.back();
  rep.residual = std::sqrt(ss / n);
  rep.samples = static_cast<int>(xs.size());
  rep.monotone_after = monotone_after(t, norm, slack);
  return rep;
}

DecayReport fit_decay(const RunRecord& record, std::optional<std::pair<double, double>> window, double slack) {
  std::vector<double> t, z;
  t.reserve(record.series.size());
  z.reserve(record.series.size());
  for (const auto& r : record.series) {
    t.push_back(r.t);
    z.push_back(r.norm_z);
  }
  const double horizon = record.config.scheme.final_time;
  const auto w = window.value_or(std::make_pair(0.1 * horizon, horizon));
  return fit_decay(t, z, w.first, w.second, slack);
}

double free_energy(const SimState& state, const PhysParams& params, const GridOperators& ops, double rho) {
  const double tau = params.tau;
  const double interface = params.nu2 * state.w1.dot(ops.shifted() * state.w1);
  const double well = 2.0 * ops.integrate(state.w1, [tau](double v) { return double_well(v, tau); });
  return interface + well + rho * state.w2.dot(ops.mass() * state.w2);
}

double control_energy(const RunRecord& record) {
  if (record.config.mode != RunMode::controlled) throw std::invalid_argument("control energy needs a controlled run");
  if (record.inputs.empty() && record.config.scheme.step_count() > 0)
    throw std::invalid_argument("run has no stored input series");
  const double dt = record.config.scheme.dt;
  double e = 0.0;
  for (const auto& r : record.inputs) e += (r.order.squaredNorm() + r.heat.squaredNorm()) * dt;
  return e;
}

ControlEnergyReport control_energy_report(const RunRecord& record, const FeedbackSetup& setup,
                                          const GridOperators& ops, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("control energy bound needs a positive decay rate");
  if (record.series.empty()) throw std::invalid_argument("run has no time series");
  const auto& fam = setup.family;
  const auto& gains = setup.gains;
  const SparseMatrix& m = ops.mass();

  ControlEnergyReport rep;
  rep.energy = control_energy(record);
  rep.rate = rate;
  rep.initial_norm_sq = record.series.front().norm_z * record.series.front().norm_z;

  const Matrix gu = fam.order_indicators.transpose() * (m * fam.order_indicators);
  const Matrix gv = fam.heat_indicators.transpose() * (m * fam.heat_indicators);
  Eigen::SelfAdjointEigenSolver<Matrix> eu(gu, Eigen::EigenvaluesOnly), ev(gv, Eigen::EigenvaluesOnly);
  rep.order_coord_norm_sq = 1.0 / eu.eigenvalues().minCoeff();
  rep.heat_coord_norm_sq = 1.0 / ev.eigenvalues().minCoeff();
  rep.order_operator_norm = operator_norm(gains.order_core, gu);
  rep.heat_operator_norm = operator_norm(gains.heat_core, gv);
  rep.order_projection_norm = projection_operator_norm(fam, setup.coupling, ops, Family::order);
  rep.heat_projection_norm = projection_operator_norm(fam, setup.coupling, ops, Family::heat);

  // Discrete A = M^{-1} K; norms of A^2 on span U~ and A on span V~.
  const SparseMatrix& kd = gains.da == DAForm::paper ? ops.stiffness() : ops.shifted();
  const SparseMatrix& kv = gains.vform == VForm::stiffness ? ops.stiffness() : ops.shifted();
  const Matrix& ut = fam.order_auxiliary;
  const Matrix& vt = fam.heat_auxiliary;
  const Matrix a_ut = ops.solve_mass(Matrix(kd * ut));
  const Matrix a2_ut = ops.solve_mass(Matrix(kd * a_ut));
  const Matrix a_vt = ops.solve_mass(Matrix(kv * vt));
  rep.order_restricted_norm =
      std::sqrt(largest_pencil_eigenvalue(a2_ut.transpose() * (m * a2_ut), ut.transpose() * (m * ut)));
  rep.heat_restricted_norm =
      std::sqrt(largest_pencil_eigenvalue(a_vt.transpose() * (m * a_vt), vt.transpose() * (m * vt)));

  const double l1 = gains.lambda1, l2 = gains.lambda2;
  rep.constant = l1 * l1 * rep.order_coord_norm_sq * rep.order_operator_norm * rep.order_operator_norm +
                 l2 * l2 * rep.heat_coord_norm_sq * rep.heat_operator_norm * rep.heat_operator_norm;
  auto p4 = [](double p) { return p * p * p * p; };
  rep.product_constant =
      l1 * l1 * rep.order_coord_norm_sq * p4(rep.order_projection_norm) * rep.order_restricted_norm *
          rep.order_restricted_norm +
      l2 * l2 * rep.heat_coord_norm_sq * p4(rep.heat_projection_norm) * rep.heat_restricted_norm *
          rep.heat_restricted_norm;
  rep.bound = rep.constant * rep.initial_norm_sq / (2.0 * rate);
  return rep;
}

double constrained_min_ratio(const Matrix& a, const Matrix& b, const Matrix& c, int variant) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n || b.cols() != n) throw std::invalid_argument("pencil matrices must be square and equal size");
  if (c.cols() == 0) return smallest_pencil_eigenvalue(a, b);
  if (c.rows() != n) throw std::invalid_argument("constraint matrix has the wrong number of rows");
  const Eigen::Index m = c.cols();
  if (m >= n) throw std::invalid_argument("too many constraints for the grid");

  Matrix cc = c;
  if (variant != 0) {
    // A different spanning set of the same constraint space: reversed and mixed columns.
    cc = c.rowwise().reverse();
    for (Eigen::Index j = 1; j < m; ++j) cc.col(j) += 0.5 * cc.col(j - 1);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(cc);
  if (qr.rank() < m) throw std::runtime_error("constraint matrix is rank deficient");
  const Matrix q = qr.householderQ();
  const Matrix z = q.rightCols(n - m);
  const Matrix az = a * z;
  const Matrix bz = b * z;
  return smallest_pencil_eigenvalue(z.transpose() * az, z.transpose() * bz);
}

double estimate_alpha(const ActuatorFamily& fam, const GridOperators& ops, GapNorm which, DAForm da,
                      int variant) {
  if (which == GapNorm::H) {
    const Matrix c = ops.mass() * fam.heat_indicators;
    return constrained_min_ratio(dense(ops.shifted()), dense(ops.mass()), c, variant);
  }
  const Matrix c = ops.mass() * fam.order_indicators;
  return constrained_min_ratio(dense_da_form(ops, da), dense(ops.shifted()), c, variant);
}

double feedback_gap_minimum(const ActuatorFamily& fam, const GridOperators& ops, double lambda1, DAForm da) {
  if (!(lambda1 >= 0.0)) throw std::invalid_argument("lambda1 must be nonnegative");
  const Matrix k = dense_da_form(ops, da);
  Matrix a = k;
  if (lambda1 > 0.0) {
    const CouplingMatrices coupling = assemble_coupling(fam, ops);
    const Matrix p = fam.order_auxiliary * (coupling.order_inverse *
                                            (fam.order_indicators.transpose() * ops.mass()));
    a += 2.0 * lambda1 * (p.transpose() * k * p);
  }
  return smallest_pencil_eigenvalue(a, dense(ops.shifted()));
}

GapReport gap_report(int level, const GridOperators& ops, const std::vector<double>& lambdas, DAForm da) {
  const ActuatorFamily fam = evaluate_family(build_layout(level, ops.spec()), ops);
  GapReport r;
  r.level = level;
  r.alpha_H = estimate_alpha(fam, ops, GapNorm::H, da);
  r.alpha_V = estimate_alpha(fam, ops, GapNorm::V, da);
  for (double l : lambdas) r.xi_min.emplace_back(l, feedback_gap_minimum(fam, ops, l, da));
  return r;
}

void write_gap_csv(std::ostream& os, const std::vector<GapReport>& reports) {
  os << "M,alpha_H,alpha_V";
  if (!reports.empty())
    for (const auto& [l, _] : reports.front().xi_min) os << ",xi_min_lambda" << num(l);
  os << '\n';
  for (const auto& r : reports) {
    os << r.level << ',' << num(r.alpha_H) << ',' << num(r.alpha_V);
    for (const auto& [_, xi] : r.xi_min) os << ',' << num(xi);
    os << '\n';
  }
}

std::string gap_summary(const std::vector<GapReport>& reports) {
  std::ostringstream os;
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "M=%d  alpha_H=%.6g  alpha_V=%.6g", r.level, r.alpha_H, r.alpha_V);
    os << buf;
    for (const auto& [l, xi] : r.xi_min) {
      std::snprintf(buf, sizeof buf, "  xi(%g)=%.6g", l, xi);
      os << buf;
    }
    os << '\n';
  }
  os << "(mesh-dependent discrete values, not bounds on the continuous infima)\n";
  return os.str();
}

}  // namespace chstab
