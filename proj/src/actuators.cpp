#include "chstab/actuators.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace chstab {

namespace {

constexpr double kNodeTolerance = 1e-12;

// Without a node strictly inside, the sine-bump column vanishes and the
// coupling matrix is singular.
bool contains_interior_node(const Box& box, const GridSpec& spec) {
  for (int a = 0; a < spec.dim; ++a) {
    const double h = spec.spacing(a);
    const double first = std::floor(box.lo[a] / h + kNodeTolerance) + 1.0;
    const double last = std::ceil(box.hi[a] / h - kNodeTolerance) - 1.0;
    if (last < first) return false;
  }
  return true;
}

bool inside(const Box& box, int dim, double x1, double x2) {
  const std::array<double, 2> x{x1, x2};
  for (int a = 0; a < dim; ++a) {
    const double tol = kNodeTolerance * std::max(1.0, std::abs(box.hi[a]));
    if (x[a] < box.lo[a] - tol || x[a] > box.hi[a] + tol) return false;
  }
  return true;
}

// The d+1 order-parameter centers of one cell must not share an affine hyperplane.
void check_affine_independence(const ActuatorLayout& layout) {
  const int d = layout.dim;
  const auto c0 = layout.order[0].center();
  if (d == 1) {
    if (std::abs(layout.order[1].center()[0] - c0[0]) == 0.0)
      throw std::logic_error("order actuator centers coincide");
    return;
  }
  const auto c1 = layout.order[1].center();
  const auto c2 = layout.order[2].center();
  const double det = (c1[0] - c0[0]) * (c2[1] - c0[1]) - (c1[1] - c0[1]) * (c2[0] - c0[0]);
  if (std::abs(det) == 0.0) throw std::logic_error("order actuator centers are collinear");
}

}  // namespace

double Box::measure(int dim) const {
  double m = 1.0;
  for (int a = 0; a < dim; ++a) m *= hi[a] - lo[a];
  return m;
}

double ActuatorLayout::covered_measure() const {
  double total = 0.0;
  for (const auto& b : order) total += b.measure(dim);
  for (const auto& b : heat) total += b.measure(dim);
  return total;
}

ActuatorLayout build_layout(int level, const GridSpec& spec) {
  spec.validate();
  if (level < 1) throw std::invalid_argument("actuator level M must be at least 1");

  ActuatorLayout layout;
  layout.level = level;
  layout.dim = spec.dim;

  const double cx = spec.lengths[0] / level;
  const double cy = spec.dim == 2 ? spec.lengths[1] / level : 0.0;

  auto make_box = [&](double x0, double sub_x, double y0, double sub_y) {
    // Centered in the sub-cell with a quarter of its side.
    Box b;
    b.lo[0] = x0 + 0.375 * sub_x;
    b.hi[0] = x0 + 0.625 * sub_x;
    if (spec.dim == 2) {
      b.lo[1] = y0 + 0.375 * sub_y;
      b.hi[1] = y0 + 0.625 * sub_y;
    }
    return b;
  };

  const int rows = spec.dim == 2 ? level : 1;
  for (int cj = 0; cj < rows; ++cj) {
    for (int ci = 0; ci < level; ++ci) {
      const double x0 = ci * cx;
      if (spec.dim == 1) {
        const double sub = cx / 3.0;
        layout.order.push_back(make_box(x0, sub, 0.0, 0.0));
        layout.order.push_back(make_box(x0 + sub, sub, 0.0, 0.0));
        layout.heat.push_back(make_box(x0 + 2.0 * sub, sub, 0.0, 0.0));
      } else {
        const double y0 = cj * cy;
        const double sx = 0.5 * cx;
        const double sy = 0.5 * cy;
        layout.order.push_back(make_box(x0, sx, y0, sy));
        layout.order.push_back(make_box(x0 + sx, sx, y0, sy));
        layout.order.push_back(make_box(x0, sx, y0 + sy, sy));
        layout.heat.push_back(make_box(x0 + sx, sx, y0 + sy, sy));
      }
    }
  }

  for (const auto* family : {&layout.order, &layout.heat}) {
    for (const auto& box : *family) {
      if (!contains_interior_node(box, spec)) {
        throw std::invalid_argument("actuator level M=" + std::to_string(level) +
                                    " is too fine for the grid: a box has no grid node in its interior");
      }
    }
  }
  check_affine_independence(layout);
  return layout;
}

double sine_bump(const Box& box, int dim, double x1, double x2) {
  if (!inside(box, dim, x1, x2)) return 0.0;
  const std::array<double, 2> x{x1, x2};
  double v = 1.0;
  for (int a = 0; a < dim; ++a) {
    const double s = (x[a] - box.lo[a]) / (box.hi[a] - box.lo[a]);
    v *= std::sin(std::numbers::pi * std::clamp(s, 0.0, 1.0));
  }
  return std::clamp(v, 0.0, 1.0);
}

ActuatorFamily evaluate_family(const ActuatorLayout& layout, const GridOperators& ops) {
  if (layout.dim != ops.spec().dim) throw std::invalid_argument("layout and grid dimensions differ");
  const int n = ops.size();
  ActuatorFamily fam;
  fam.layout = layout;
  fam.order_indicators = Matrix::Zero(n, layout.order_count());
  fam.order_auxiliary = Matrix::Zero(n, layout.order_count());
  fam.heat_indicators = Matrix::Zero(n, layout.heat_count());
  fam.heat_auxiliary = Matrix::Zero(n, layout.heat_count());

  for (int k = 0; k < n; ++k) {
    const auto x = ops.node(k);
    for (int j = 0; j < layout.order_count(); ++j) {
      const Box& b = layout.order[j];
      if (!inside(b, layout.dim, x[0], x[1])) continue;
      fam.order_indicators(k, j) = 1.0;
      const double phi = sine_bump(b, layout.dim, x[0], x[1]);
      fam.order_auxiliary(k, j) = phi * phi;
    }
    for (int j = 0; j < layout.heat_count(); ++j) {
      const Box& b = layout.heat[j];
      if (!inside(b, layout.dim, x[0], x[1])) continue;
      fam.heat_indicators(k, j) = 1.0;
      fam.heat_auxiliary(k, j) = sine_bump(b, layout.dim, x[0], x[1]);
    }
  }
  return fam;
}

void write_layout(std::ostream& os, const ActuatorLayout& layout) {
  os << "# level " << layout.level << " dim " << layout.dim << "\n";
  os << "# family index lo_1 lo_2 hi_1 hi_2\n";
  os.precision(17);
  auto emit = [&](const char* name, const std::vector<Box>& boxes) {
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      const Box& b = boxes[j];
      os << name << ' ' << j << ' ' << b.lo[0] << ' ' << b.lo[1] << ' ' << b.hi[0] << ' '
         << b.hi[1] << "\n";
    }
  };
  emit("order", layout.order);
  emit("heat", layout.heat);
}

ActuatorLayout read_layout(std::istream& is) {
  ActuatorLayout layout;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "level") {
        std::string dimkey;
        ls >> layout.level >> dimkey >> layout.dim;
      }
      continue;
    }
    std::string family;
    std::size_t index = 0;
    Box b;
    if (!(ls >> family >> index >> b.lo[0] >> b.lo[1] >> b.hi[0] >> b.hi[1])) {
      throw std::runtime_error("layout line " + std::to_string(lineno) + ": malformed entry");
    }
    if (family == "order") {
      layout.order.push_back(b);
    } else if (family == "heat") {
      layout.heat.push_back(b);
    } else {
      throw std::runtime_error("layout line " + std::to_string(lineno) + ": unknown family '" +
                               family + "'");
    }
  }
  return layout;
}

}  // namespace chstab
