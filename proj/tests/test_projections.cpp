#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "chstab/projections.hpp"

using namespace chstab;

namespace {

GridSpec square(int n) {
  GridSpec s;
  s.cells = {n, n};
  return s;
}

struct Setup {
  GridOperators ops;
  ActuatorFamily fam;
  CouplingMatrices cp;
  explicit Setup(int n, int level)
      : ops(square(n)), fam(evaluate_family(build_layout(level, square(n)), ops)), cp(assemble_coupling(fam, ops)) {}
};

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("Gram matrices are diagonal and Q inverts them") {
  const Setup s(32, 2);
  for (Family f : {Family::order, Family::heat}) {
    const Matrix& g = s.cp.gram(f);
    const Matrix off = g - Matrix(g.diagonal().asDiagonal());
    CHECK(off.cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g * s.cp.inverse(f) - Matrix::Identity(g.rows(), g.cols())).norm() < 1e-12);
  }
}

TEST_CASE("Gram diagonals approach the box integrals") {
  // Box side 1/8. The squared bump integrates to ab/4 and the node sums
  // reproduce it exactly; the plain bump integrates to 4ab/pi^2 and
  // converges at second order.
  const double ab = 0.125 * 0.125;
  const double heat_exact = 4.0 * ab / (std::numbers::pi * std::numbers::pi);
  double err[3];
  int k = 0;
  for (int n : {32, 64, 128}) {
    const Setup s(n, 1);
    CHECK(s.cp.order_gram(0, 0) == doctest::Approx(ab / 4.0).epsilon(1e-13));
    err[k++] = std::abs(s.cp.heat_gram(0, 0) - heat_exact);
  }
  CHECK(std::log2(err[0] / err[1]) >= 1.9);
  CHECK(std::log2(err[1] / err[2]) >= 1.9);
  CHECK(err[2] / heat_exact < 1e-2);
}

TEST_CASE("projections reproduce their own ranges") {
  const Setup s(24, 2);
  for (Family f : {Family::order, Family::heat}) {
    const Vector ut = s.fam.auxiliary(f).col(1);
    CHECK((project_tilde(s.fam, s.cp, s.ops, ut, f) - ut).norm() < 1e-12 * ut.norm());
    const Vector u = s.fam.indicators(f).col(0);
    CHECK((project_actuator(s.fam, s.cp, s.ops, u, f) - u).norm() < 1e-12 * u.norm());
    // Fields M-orthogonal to every actuator are annihilated.
    const Vector one = Vector::Ones(s.ops.size());
    const Matrix& ind = s.fam.indicators(f);
    const Matrix mu = s.ops.mass() * ind;
    const Vector coef = (ind.transpose() * mu).ldlt().solve(mu.transpose() * one);
    const Vector perp = one - ind * coef;
    CHECK(project_tilde(s.fam, s.cp, s.ops, perp, f).norm() < 1e-10);
  }
}

TEST_CASE("projections are idempotent on random fields") {
  const Setup s(24, 3);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const Vector y = random_vector(s.ops.size(), rng);
    for (Family f : {Family::order, Family::heat}) {
      const Vector p = project_tilde(s.fam, s.cp, s.ops, y, f);
      REQUIRE((project_tilde(s.fam, s.cp, s.ops, p, f) - p).norm() <= 1e-10 * p.norm());
      const Vector q = project_actuator(s.fam, s.cp, s.ops, y, f);
      REQUIRE((project_actuator(s.fam, s.cp, s.ops, q, f) - q).norm() <= 1e-10 * q.norm());
    }
  }
}

TEST_CASE("the two projections are M-adjoint") {
  const Setup s(20, 2);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    const Vector x = random_vector(s.ops.size(), rng), y = random_vector(s.ops.size(), rng);
    for (Family f : {Family::order, Family::heat}) {
      const double a = project_tilde(s.fam, s.cp, s.ops, y, f).dot(s.ops.mass() * x);
      const double b = y.dot(s.ops.mass() * project_actuator(s.fam, s.cp, s.ops, x, f));
      CHECK(a == doctest::Approx(b).epsilon(1e-10));
    }
  }
}

TEST_CASE("gains vanish at zero and scale linearly in lambda") {
  const Setup s(16, 1);
  const FeedbackGains g0 = build_gains(s.fam, s.ops, s.cp, 0.0, 0.0);
  CHECK(g0.order_gain.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g0.heat_gain.cwiseAbs().maxCoeff() == 0.0);
  const FeedbackGains g1 = build_gains(s.fam, s.ops, s.cp, 3.5, 7.0);
  const FeedbackGains g2 = build_gains(s.fam, s.ops, s.cp, 7.0, 14.0);
  CHECK(g2.order_gain == 2.0 * g1.order_gain);
  CHECK(g2.heat_gain == 2.0 * g1.heat_gain);
}

TEST_CASE("feedback is dissipative with the monotonicity identity") {
  const Setup s(24, 2);
  std::mt19937_64 rng(13);
  for (DAForm da : {DAForm::paper, DAForm::full}) {
    for (VForm vf : {VForm::stiffness, VForm::shifted}) {
      const FeedbackGains g = build_gains(s.fam, s.ops, s.cp, 20.0, 30.0, da, vf);
      for (int k = 0; k < 25; ++k) {
        const Vector w = random_vector(s.ops.size(), rng);
        for (Family f : {Family::order, Family::heat}) {
          const double lhs = feedback_load(g, s.fam, s.ops, w, f).load.dot(w);
          const Vector pw = project_tilde(s.fam, s.cp, s.ops, w, f);
          const Vector kpw = f == Family::order ? apply_da_form(s.ops, da, pw) : apply_v_form(s.ops, vf, pw);
          const double rhs = -g.lambda(f) * pw.dot(kpw);
          REQUIRE(lhs <= 0.0);
          REQUIRE(std::abs(lhs - rhs) <= 1e-8 * std::abs(rhs));
        }
      }
    }
  }
}

TEST_CASE("feedback load is the mass-weighted actuator combination") {
  const Setup s(16, 1);
  const FeedbackGains g = build_gains(s.fam, s.ops, s.cp, 10.0, 10.0);
  const Vector w = s.fam.auxiliary(Family::order).col(2);
  const FeedbackLoad fl = feedback_load(g, s.fam, s.ops, w, Family::order);
  CHECK((fl.coords - g.order_gain * w).norm() == 0.0);
  CHECK((fl.load - s.ops.mass() * (s.fam.order_indicators * fl.coords)).norm() < 1e-14 * fl.load.norm());
  // For a field in span U~ the coordinates reduce to one column of R.
  const Vector expect = -10.0 * (s.cp.order_inverse.transpose() * g.order_form.col(2));
  CHECK((fl.coords - expect).norm() <= 1e-10 * expect.norm());
  CHECK(feedback_load(g, s.fam, s.ops, Vector::Zero(s.ops.size()), Family::heat).coords.norm() == 0.0);
}

TEST_CASE("projection operator norms") {
  const Setup s(48, 1);
  // U~ = U makes the projection M-orthogonal.
  ActuatorFamily same = s.fam;
  same.heat_auxiliary = same.heat_indicators;
  const CouplingMatrices cs = assemble_coupling(same, s.ops);
  CHECK(projection_operator_norm(same, cs, s.ops, Family::heat) == doctest::Approx(1.0).epsilon(1e-10));

  // One actuator per box: ||P|| = ||1_w|| ||phi|| / (1_w, phi), which is
  // 3/2 for squared sine bumps and pi^2/8 for plain ones.
  const Setup t(96, 1), u(192, 1);
  const double limit[2] = {1.5, std::pow(std::numbers::pi, 2) / 8.0};
  int k = 0;
  for (Family f : {Family::order, Family::heat}) {
    const double n48 = projection_operator_norm(s.fam, s.cp, s.ops, f);
    const double n96 = projection_operator_norm(t.fam, t.cp, t.ops, f);
    const double n192 = projection_operator_norm(u.fam, u.cp, u.ops, f);
    CHECK(n48 >= 1.0);
    CHECK(std::abs(n96 - limit[k]) < std::abs(n48 - limit[k]));
    CHECK(std::abs(n192 - limit[k]) < std::abs(n96 - limit[k]));
    CHECK(std::abs(n192 - limit[k]) / limit[k] < 0.03);
    if (f == Family::order) CHECK(std::abs(n48 - n96) / n96 < 0.05);
    ++k;
  }
}

TEST_CASE("gain cache round trip and rejection") {
  const Setup s(12, 1);
  const FeedbackGains g = build_gains(s.fam, s.ops, s.cp, 5.0, 6.0);
  const auto dir = std::filesystem::temp_directory_path() / "chstab_gain_cache_test";
  std::filesystem::remove_all(dir);
  GainsKey key{s.ops.spec().fingerprint(), 1, 5.0, 6.0, DAForm::paper, VForm::stiffness};
  const auto path = dir / (key.file_stem() + ".bin");
  save_gains(path, key, g);
  const auto back = load_gains(path, key);
  REQUIRE(back.has_value());
  CHECK(back->order_gain == g.order_gain);
  CHECK(back->heat_core == g.heat_core);
  GainsKey other = key;
  other.lambda1 = 5.5;
  CHECK_FALSE(load_gains(path, other).has_value());
  CHECK_FALSE(load_gains(dir / "missing.bin", key).has_value());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), sizeof bad);
  }
  CHECK_FALSE(load_gains(path, key).has_value());
  // cached_gains rebuilds and rewrites a stale file.
  const FeedbackGains c = cached_gains(s.fam, s.ops, s.cp, 5.0, 6.0, DAForm::paper, VForm::stiffness, dir);
  CHECK(c.order_gain == g.order_gain);
  std::filesystem::remove_all(dir);
}

TEST_CASE("form flags parse and print") {
  CHECK(parse_da_form(to_string(DAForm::full)) == DAForm::full);
  CHECK(parse_v_form(to_string(VForm::shifted)) == VForm::shifted);
  CHECK_THROWS_AS(parse_da_form("bogus"), std::invalid_argument);
}
