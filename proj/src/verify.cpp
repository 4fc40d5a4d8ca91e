#include "chstab/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>

#include "chstab/actuators.hpp"
#include "chstab/analysis.hpp"
#include "chstab/dynamics.hpp"
#include "chstab/grid.hpp"
#include "chstab/projections.hpp"

namespace chstab {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

CheckResult grid_invariants(int n) {
  GridSpec spec;
  spec.lengths = {1.0, 0.75};
  spec.cells = {n, n + 3};
  const GridOperators ops(spec);
  const Vector one = Vector::Ones(ops.size());
  const Matrix m = Matrix(ops.mass()), s = Matrix(ops.stiffness());
  const double sym = (m - m.transpose()).cwiseAbs().maxCoeff() + (s - s.transpose()).cwiseAbs().maxCoeff();
  const double kernel = (ops.stiffness() * one).norm();
  const double vol = std::abs(one.dot(ops.mass() * one) - spec.volume());
  const bool pass = sym == 0.0 && kernel < 1e-12 && vol < 1e-12;
  return {"grid invariants", pass, fmt("asymmetry %.3g, |S1| %.3g", sym, kernel) + fmt(", volume error %.3g", vol)};
}

CheckResult projection_algebra(int n) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  double worst_adj = 0.0, worst_idem = 0.0;
  for (int level = 1; level <= 3; ++level) {
    const ActuatorFamily fam = evaluate_family(build_layout(level, spec), ops);
    const CouplingMatrices cp = assemble_coupling(fam, ops);
    for (Family f : {Family::order, Family::heat}) {
      const Matrix mu = ops.mass() * fam.indicators(f);
      const Matrix mut = ops.mass() * fam.auxiliary(f);
      const Matrix& q = cp.inverse(f);
      const Matrix lhs = mut * q * mu.transpose();
      const Matrix rhs = (mu * q.transpose() * mut.transpose()).transpose();
      worst_adj = std::max(worst_adj, rel_diff(lhs, rhs));
      for (int trial = 0; trial < 20; ++trial) {
        Vector y(ops.size());
        for (auto& v : y) v = nd(rng);
        const Vector py = project_tilde(fam, cp, ops, y, f);
        const Vector ppy = project_tilde(fam, cp, ops, py, f);
        worst_idem = std::max(worst_idem, (ppy - py).norm() / std::max(py.norm(), 1e-300));
      }
    }
  }
  return {"projection adjoint and idempotency", worst_adj <= 1e-10 && worst_idem <= 1e-10,
          fmt("adjoint %.3g, idempotency %.3g", worst_adj, worst_idem)};
}

CheckResult dissipativity(int n, Fault fault) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  const ActuatorFamily fam = evaluate_family(build_layout(2, spec), ops);
  const CouplingMatrices cp = assemble_coupling(fam, ops);
  FeedbackGains g = build_gains(fam, ops, cp, 10.0, 10.0);
  if (fault == Fault::flip_gain_sign) g.order_gain = -g.order_gain;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  bool signs = true;
  for (int trial = 0; trial < 20; ++trial) {
    Vector w(ops.size());
    for (auto& v : w) v = nd(rng);
    for (Family f : {Family::order, Family::heat}) {
      const FeedbackLoad fl = feedback_load(g, fam, ops, w, f);
      const double lhs = fl.load.dot(w);
      const Vector pw = project_tilde(fam, cp, ops, w, f);
      const Vector kpw = f == Family::order ? apply_da_form(ops, g.da, pw) : apply_v_form(ops, g.vform, pw);
      const double rhs = -g.lambda(f) * pw.dot(kpw);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300));
      signs = signs && lhs <= 0.0;
    }
  }
  return {"feedback dissipativity", worst <= 1e-8 && signs,
          fmt("identity error %.3g", worst) + (signs ? ", all nonpositive" : ", positive value found")};
}

CheckResult mass_conservation(int n, int steps) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  PhysParams p;
  SchemeConfig sc;
  const Stepper st(ops, p, sc);
  SimState s = initial_state(InitialKind::controlled, ops, p);
  const double m0 = (ops.mass() * s.w1).sum();
  double worst = 0.0;
  for (int k = 0; k < steps; ++k) {
    s = st.step(s);
    worst = std::max(worst, std::abs((ops.mass() * s.w1).sum() - m0));
  }
  const bool pass = worst <= 1e-8 * std::abs(m0) + 1e-12;
  return {"mass conservation", pass, fmt("max drift %.3g over %g steps", worst, steps)};
}

CheckResult energy_stability(int n, int steps) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  PhysParams p;
  p.nu0 = 0.0;
  p.nu1 = 0.0;
  double worst = -1e300;
  for (double dt : {1e-3, 4.0 * p.nu2 / p.tau}) {
    SchemeConfig sc;
    sc.dt = dt;
    const Stepper st(ops, p, sc);
    SimState s = initial_state(InitialKind::reference, ops, p);
    double e = isothermal_energy(ops, p, s.w1);
    for (int k = 0; k < steps; ++k) {
      s = st.step(s);
      const double e1 = isothermal_energy(ops, p, s.w1);
      worst = std::max(worst, (e1 - e) / std::abs(e));
      e = e1;
    }
  }
  return {"isothermal energy stability", worst <= 1e-10, fmt("largest relative increase %.3g", worst)};
}

// Dense restatement of one step in the unsymmetric (w, p) arrangement.
CheckResult dense_step_agreement(int n, int steps) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  PhysParams p;
  SchemeConfig sc;
  const Stepper st(ops, p, sc);
  const int nn = ops.size();
  const Matrix m = Matrix(ops.mass()), s = Matrix(ops.stiffness());
  Matrix a(2 * nn, 2 * nn);
  a << m / sc.dt, s, -(p.nu2 * s + (p.nu0 * p.nu1 + 2.0 * p.tau) * m), m;
  const Eigen::PartialPivLU<Matrix> lu_a(a);
  const Eigen::PartialPivLU<Matrix> lu_b(Matrix(m / sc.dt + s));
  SimState x = initial_state(InitialKind::controlled, ops, p);
  SimState y = x;
  double worst = 0.0;
  const double tau = p.tau;
  for (int k = 0; k < steps; ++k) {
    x = st.step(x);
    Vector rhs(2 * nn);
    rhs.head(nn) = m * y.w1 / sc.dt + p.nu1 * s * y.w2;
    rhs.tail(nn) = ops.nonlinear_load(y.w1, [tau](double v) { return f_explicit(v, tau); });
    const Vector sol = lu_a.solve(rhs);
    y.w1 = sol.head(nn);
    y.p = sol.tail(nn);
    y.w2 = lu_b.solve(Vector(m * y.w2 / sc.dt + p.nu0 * s * y.w1));
    for (const auto& [u, v] : {std::pair{&x.w1, &y.w1}, {&x.w2, &y.w2}, {&x.p, &y.p}})
      worst = std::max(worst, (*u - *v).norm() / std::max(v->norm(), 1e-300));
  }
  return {"sparse vs dense stepping", worst <= 1e-9, fmt("max relative difference %.3g over %g steps", worst, steps)};
}

CheckResult gap_trends(int n) {
  GridSpec spec;
  spec.cells = {n, n};
  const GridOperators ops(spec);
  std::vector<GapReport> reps;
  for (int level = 1; level <= 3; ++level) reps.push_back(gap_report(level, ops, {0.0, 10.0, 100.0}));
  bool pass = true;
  for (int i = 0; i + 1 < 3; ++i) {
    pass = pass && reps[i].alpha_H < reps[i + 1].alpha_H && reps[i].alpha_V < reps[i + 1].alpha_V;
    for (std::size_t j = 0; j < reps[i].xi_min.size(); ++j)
      pass = pass && reps[i].xi_min[j].second <= reps[i + 1].xi_min[j].second * (1.0 + 1e-10);
  }
  for (const auto& r : reps)
    for (std::size_t j = 0; j + 1 < r.xi_min.size(); ++j)
      pass = pass && r.xi_min[j].second <= r.xi_min[j + 1].second * (1.0 + 1e-10);
  std::string detail = fmt("alpha_H %.4g..%.4g", reps.front().alpha_H, reps.back().alpha_H) +
                       fmt(", alpha_V %.4g..%.4g", reps.front().alpha_V, reps.back().alpha_V);
  return {"spectral gap trends", pass, detail};
}

CheckResult timed(const std::string& name, const std::function<CheckResult()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

VerifyLevel parse_verify_level(const std::string& s) {
  if (s == "fast") return VerifyLevel::fast;
  if (s == "full") return VerifyLevel::full;
  throw std::invalid_argument("unknown verify level '" + s + "' (expected fast|full)");
}

Fault parse_fault(const std::string& s) {
  if (s == "none") return Fault::none;
  if (s == "flip-gain-sign") return Fault::flip_gain_sign;
  throw std::invalid_argument("unknown fault '" + s + "' (expected none|flip-gain-sign)");
}

std::vector<CheckResult> run_verification(VerifyLevel level, Fault fault) {
  const bool full = level == VerifyLevel::full;
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> checks = {
      {"grid invariants", [] { return grid_invariants(12); }},
      {"projection adjoint and idempotency", [full] { return projection_algebra(full ? 48 : 24); }},
      {"feedback dissipativity", [fault] { return dissipativity(24, fault); }},
      {"mass conservation", [full] { return mass_conservation(16, full ? 1000 : 200); }},
      {"isothermal energy stability", [full] { return energy_stability(16, full ? 200 : 50); }},
      {"sparse vs dense stepping", [full] { return dense_step_agreement(8, full ? 10 : 3); }},
      {"spectral gap trends", [full] { return gap_trends(full ? 32 : 24); }},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : checks) out.push_back(timed(name, fn));
  return out;
}

}  // namespace chstab
