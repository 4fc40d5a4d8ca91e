#include <doctest.h>

#include <sstream>

#include "chstab/actuators.hpp"

using namespace chstab;

namespace {

GridSpec square(int n) {
  GridSpec s;
  s.cells = {n, n};
  return s;
}

bool disjoint(const Box& a, const Box& b, int dim) {
  for (int k = 0; k < dim; ++k)
    if (a.hi[k] <= b.lo[k] || b.hi[k] <= a.lo[k]) return true;
  return false;
}

}  // namespace

TEST_CASE("actuator counts and coverage in two dimensions") {
  for (int m = 1; m <= 3; ++m) {
    const ActuatorLayout l = build_layout(m, square(48));
    CHECK(l.order_count() == 3 * m * m);
    CHECK(l.heat_count() == m * m);
    CHECK(l.covered_measure() == doctest::Approx(0.0625).epsilon(1e-14));
  }
}

TEST_CASE("actuator counts and coverage in one dimension") {
  GridSpec s;
  s.dim = 1;
  s.cells = {96, 1};
  for (int m = 1; m <= 3; ++m) {
    const ActuatorLayout l = build_layout(m, s);
    CHECK(l.order_count() == 2 * m);
    CHECK(l.heat_count() == m);
    CHECK(l.covered_measure() == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("boxes are pairwise disjoint and inside the domain") {
  const ActuatorLayout l = build_layout(3, square(48));
  std::vector<Box> all = l.order;
  all.insert(all.end(), l.heat.begin(), l.heat.end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      CHECK(all[i].lo[k] > 0.0);
      CHECK(all[i].hi[k] < 1.0);
    }
    for (std::size_t j = i + 1; j < all.size(); ++j) CHECK(disjoint(all[i], all[j], 2));
  }
}

TEST_CASE("the heat box sits in the top-right quadrant of each cell") {
  const ActuatorLayout l = build_layout(1, square(16));
  const auto c = l.heat[0].center();
  CHECK(c[0] == doctest::Approx(0.75));
  CHECK(c[1] == doctest::Approx(0.75));
  CHECK(l.order[0].center()[0] == doctest::Approx(0.25));
  CHECK(l.order[0].hi[0] - l.order[0].lo[0] == doctest::Approx(0.125));
}

TEST_CASE("sine bump values at the center, faces and outside") {
  Box b;
  b.lo = {0.25, 0.5};
  b.hi = {0.5, 0.75};
  CHECK(sine_bump(b, 2, 0.375, 0.625) == doctest::Approx(1.0));
  CHECK(sine_bump(b, 2, 0.25, 0.625) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sine_bump(b, 2, 0.9, 0.625) == 0.0);
}

TEST_CASE("evaluated families respect their ranges") {
  const GridSpec spec = square(32);
  const GridOperators ops(spec);
  const ActuatorFamily fam = evaluate_family(build_layout(2, spec), ops);
  for (Family f : {Family::order, Family::heat}) {
    const Matrix& ind = fam.indicators(f);
    const Matrix& aux = fam.auxiliary(f);
    CHECK(ind.rows() == ops.size());
    CHECK(aux.minCoeff() >= 0.0);
    CHECK(aux.maxCoeff() <= 1.0);
    // Auxiliary supports lie inside the indicator supports.
    CHECK(((aux.array() > 0.0) && (ind.array() == 0.0)).count() == 0);
    // Each node belongs to at most one actuator.
    CHECK(ind.rowwise().sum().maxCoeff() <= 1.0);
  }
}

TEST_CASE("too fine a level for the grid is rejected") {
  CHECK_NOTHROW(build_layout(3, square(32)));
  CHECK_THROWS_AS(build_layout(3, square(8)), std::invalid_argument);
  CHECK_THROWS_AS(build_layout(0, square(32)), std::invalid_argument);
}

TEST_CASE("layout round trip through text") {
  const ActuatorLayout l = build_layout(2, square(32));
  std::stringstream ss;
  write_layout(ss, l);
  const ActuatorLayout r = read_layout(ss);
  CHECK(r.level == 2);
  REQUIRE(r.order_count() == l.order_count());
  REQUIRE(r.heat_count() == l.heat_count());
  for (int j = 0; j < l.order_count(); ++j) {
    CHECK(r.order[j].lo == l.order[j].lo);
    CHECK(r.order[j].hi == l.order[j].hi);
  }
}
