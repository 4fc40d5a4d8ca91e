#include <doctest.h>

#include <cmath>

#include "chstab/analysis.hpp"

using namespace chstab;

namespace {

GridSpec square(int n) {
  GridSpec s;
  s.cells = {n, n};
  return s;
}

}  // namespace

TEST_CASE("decay fit recovers an exponential rate") {
  std::vector<double> t, y;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.01 * k);
    y.push_back(2.0 * std::exp(-3.0 * t.back()));
  }
  const DecayReport r = fit_decay(t, y, 0.1, 1.0);
  CHECK(r.rate == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(r.residual < 1e-10);
  CHECK(r.samples == 91);
  REQUIRE(r.monotone_after.has_value());
  CHECK(*r.monotone_after == 0.0);

  const DecayReport c = fit_decay(t, std::vector<double>(t.size(), 4.0), 0.0, 1.0);
  CHECK(std::abs(c.rate) < 1e-12);
  CHECK_THROWS_AS(fit_decay(t, y, 0.0, 0.05), std::invalid_argument);
  y[50] = 0.0;
  CHECK_THROWS_AS(fit_decay(t, y, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("monotone tail detection") {
  const std::vector<double> t = {0, 1, 2, 3, 4, 5};
  CHECK(monotone_after(t, {5, 4, 3, 3.5, 3, 2}).value() == 3.0);
  CHECK_FALSE(monotone_after(t, {5, 4, 3, 2, 1, 1.5}).has_value());
  CHECK(monotone_after(t, {5, 4, 3, 3.0000001, 3, 2}, 1e-6).value() == 0.0);
}

TEST_CASE("free energy of homogeneous states") {
  const GridOperators ops(square(6));
  PhysParams p;
  SimState s;
  s.w1 = Vector::Ones(ops.size());
  s.w2 = Vector::Zero(ops.size());
  CHECK(free_energy(s, p, ops) == doctest::Approx(p.nu2).epsilon(1e-12));
  s.w2 = Vector::Constant(ops.size(), 2.0);
  CHECK(free_energy(s, p, ops) == doctest::Approx(p.nu2 + 4.0).epsilon(1e-12));
  s.w1 = Vector::Zero(ops.size());
  CHECK(free_energy(s, p, ops, 0.5) == doctest::Approx(2.0 * 0.25 * p.tau + 2.0).epsilon(1e-12));
}

TEST_CASE("interface and well part of the free energy decays without heat coupling") {
  const GridOperators ops(square(16));
  PhysParams p;
  p.nu0 = p.nu1 = 0.0;
  SchemeConfig sc;
  sc.dt = 1e-3;
  const Stepper st(ops, p, sc);
  SimState s = initial_state(InitialKind::controlled, ops, p);
  s.w2 = Vector::Constant(ops.size(), 0.5);
  auto lyap = [&](const SimState& x) {
    const double h = norm_H(ops, x.w1);
    return free_energy(x, p, ops) - p.nu2 * h * h;
  };
  double e = lyap(s);
  for (int k = 0; k < 200; ++k) {
    s = st.step(s);
    const double e1 = lyap(s);
    REQUIRE(e1 <= e + 1e-10 * std::abs(e));
    e = e1;
  }
}

TEST_CASE("unconstrained Rayleigh quotient of the V norm is one") {
  const GridOperators ops(square(8));
  const Matrix a = Matrix(ops.shifted()), b = Matrix(ops.mass());
  CHECK(constrained_min_ratio(a, b, Matrix()) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("gap estimates do not depend on the null-space basis") {
  const GridOperators ops(square(16));
  const ActuatorFamily fam = evaluate_family(build_layout(2, ops.spec()), ops);
  for (GapNorm g : {GapNorm::H, GapNorm::V}) {
    const double a0 = estimate_alpha(fam, ops, g, DAForm::full, 0);
    const double a1 = estimate_alpha(fam, ops, g, DAForm::full, 1);
    CHECK(a0 > 1.0);
    CHECK(std::abs(a0 - a1) <= 1e-9 * a0);
  }
}

TEST_CASE("feedback-gap minimum without feedback is one and grows with the gain") {
  const GridOperators ops(square(16));
  const ActuatorFamily fam = evaluate_family(build_layout(1, ops.spec()), ops);
  const double x0 = feedback_gap_minimum(fam, ops, 0.0);
  CHECK(x0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(feedback_gap_minimum(fam, ops, 10.0) >= x0 * (1 - 1e-10));
}

TEST_CASE("gap reports and their CSV") {
  const GridOperators ops(square(16));
  const GapReport r = gap_report(1, ops, {0.0, 10.0});
  CHECK(r.level == 1);
  CHECK(r.xi_min.size() == 2);
  std::ostringstream os;
  write_gap_csv(os, {r});
  CHECK(os.str().rfind("M,alpha_H,alpha_V,xi_min_lambda0,xi_min_lambda10\n1,", 0) == 0);
}

TEST_CASE("control energy sums squared inputs") {
  RunRecord r;
  r.config.mode = RunMode::controlled;
  r.config.scheme.dt = 0.5;
  InputRow a;
  a.order = Vector::Constant(3, 1.0);
  a.heat = Vector::Constant(1, 2.0);
  r.inputs = {a, a};
  CHECK(control_energy(r) == doctest::Approx(7.0));
}
