#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "chstab/grid.hpp"

namespace chstab {

struct Box {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};

  std::array<double, 2> center() const { return {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])}; }
  double measure(int dim) const;
};

/// Which equation an actuator acts on.
enum class Family { order, heat };

/// Actuator supports for refinement level M.
///
/// The domain is tiled by M^d congruent cells. Each cell is split into d+2
/// congruent sub-cells (2x2 quadrants in 2-D, three intervals in 1-D) and
/// every sub-cell carries one box centered in it with a quarter of the
/// sub-cell side per axis. In each cell the last sub-cell (top-right quadrant
/// in 2-D) feeds the heat equation; the other d+1 feed the order parameter.
/// Boxes are listed cell by cell with cells in node order.
struct ActuatorLayout {
  int level = 1;
  int dim = 2;
  std::vector<Box> order;
  std::vector<Box> heat;

  int order_count() const { return static_cast<int>(order.size()); }
  int heat_count() const { return static_cast<int>(heat.size()); }
  const std::vector<Box>& boxes(Family f) const { return f == Family::order ? order : heat; }
  /// Summed box measure, computed from geometry.
  double covered_measure() const;
};

/// Nodal evaluations of actuators and auxiliary functions, one column each.
struct ActuatorFamily {
  ActuatorLayout layout;
  Matrix order_indicators;  // [U_M]
  Matrix heat_indicators;   // [V_M]
  Matrix order_auxiliary;   // [U~_M], squared sine bumps
  Matrix heat_auxiliary;    // [V~_M], sine bumps

  const Matrix& indicators(Family f) const {
    return f == Family::order ? order_indicators : heat_indicators;
  }
  const Matrix& auxiliary(Family f) const {
    return f == Family::order ? order_auxiliary : heat_auxiliary;
  }
};

/// Throws std::invalid_argument if M < 1 or if some box has no node of `spec`
/// in its interior, since its discrete sine bump would vanish.
ActuatorLayout build_layout(int level, const GridSpec& spec);

ActuatorFamily evaluate_family(const ActuatorLayout& layout, const GridOperators& ops);

/// Sine bump 1_box(x) * prod_n sin(pi (x_n - lo_n) / (hi_n - lo_n)).
double sine_bump(const Box& box, int dim, double x1, double x2);

/// Plain-text listing, one box per line: family index lo_1 lo_2 hi_1 hi_2.
void write_layout(std::ostream& os, const ActuatorLayout& layout);
ActuatorLayout read_layout(std::istream& is);

}  // namespace chstab
