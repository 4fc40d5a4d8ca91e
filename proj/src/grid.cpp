#include "chstab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace chstab {

namespace detail {

// Tensor-product data for one reference cell: local node a = a0 + 2*a1.
struct CellQuadrature {
  int local_nodes = 0;
  std::vector<double> weight;                // includes cell volume
  std::vector<std::vector<double>> shape;    // [q][a]
  std::vector<std::vector<std::array<double, 2>>> grad;  // [q][a]
};

}  // namespace detail

namespace {

using detail::CellQuadrature;

struct GaussRule {
  std::vector<double> points;   // on [0,1]
  std::vector<double> weights;  // sum to 1
};

GaussRule gauss_rule(int npts) {
  if (npts == 2) {
    const double a = 0.5 / std::sqrt(3.0);
    return {{0.5 - a, 0.5 + a}, {0.5, 0.5}};
  }
  const double a = 0.5 * std::sqrt(0.6);
  return {{0.5 - a, 0.5, 0.5 + a}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
}

CellQuadrature cell_quadrature(const GridSpec& spec, int npts) {
  const GaussRule g = gauss_rule(npts);
  CellQuadrature cq;
  cq.local_nodes = spec.dim == 1 ? 2 : 4;
  const int q1 = npts;
  const int q2 = spec.dim == 1 ? 1 : npts;
  const double h0 = spec.spacing(0);
  const double h1 = spec.dim == 1 ? 1.0 : spec.spacing(1);
  for (int qj = 0; qj < q2; ++qj) {
    for (int qi = 0; qi < q1; ++qi) {
      const double s = g.points[qi];
      const double t = spec.dim == 1 ? 0.0 : g.points[qj];
      const double w = g.weights[qi] * (spec.dim == 1 ? 1.0 : g.weights[qj]) * h0 * h1;
      std::vector<double> n(cq.local_nodes);
      std::vector<std::array<double, 2>> dn(cq.local_nodes);
      for (int a = 0; a < cq.local_nodes; ++a) {
        const int a0 = a % 2;
        const int a1 = a / 2;
        const double lx = a0 ? s : 1.0 - s;
        const double dx = (a0 ? 1.0 : -1.0) / h0;
        if (spec.dim == 1) {
          n[a] = lx;
          dn[a] = {dx, 0.0};
        } else {
          const double ly = a1 ? t : 1.0 - t;
          const double dy = (a1 ? 1.0 : -1.0) / h1;
          n[a] = lx * ly;
          dn[a] = {dx * ly, lx * dy};
        }
      }
      cq.weight.push_back(w);
      cq.shape.push_back(std::move(n));
      cq.grad.push_back(std::move(dn));
    }
  }
  return cq;
}

// Global node indices of the cell with lower-left lattice corner (ci, cj).
std::array<int, 4> cell_nodes(const GridSpec& spec, int ci, int cj) {
  if (spec.dim == 1) return {ci, ci + 1, -1, -1};
  return {node_index(spec, ci, cj), node_index(spec, ci + 1, cj), node_index(spec, ci, cj + 1),
          node_index(spec, ci + 1, cj + 1)};
}

void check_size(const GridOperators& ops, const Vector& u) {
  if (u.size() != ops.size()) {
    throw std::invalid_argument("node vector has length " + std::to_string(u.size()) +
                                ", grid has " + std::to_string(ops.size()) + " nodes");
  }
}

}  // namespace

int GridSpec::node_count() const {
  int n = 1;
  for (int a = 0; a < dim; ++a) n *= cells[a] + 1;
  return n;
}

double GridSpec::volume() const {
  double v = 1.0;
  for (int a = 0; a < dim; ++a) v *= lengths[a];
  return v;
}

std::uint64_t GridSpec::fingerprint() const {
  // FNV-1a over the defining fields.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(&dim, sizeof dim);
  for (int a = 0; a < dim; ++a) {
    mix(&lengths[a], sizeof(double));
    mix(&cells[a], sizeof(int));
  }
  return h;
}

void GridSpec::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
  for (int a = 0; a < dim; ++a) {
    if (!(lengths[a] > 0.0) || !std::isfinite(lengths[a]))
      throw std::invalid_argument("grid lengths must be positive");
    if (cells[a] < 2) throw std::invalid_argument("grid needs at least 2 cells per axis");
  }
}

GridOperators::GridOperators(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  const int n = spec_.node_count();
  const CellQuadrature cq = cell_quadrature(spec_, 2);
  const int cx = spec_.cells[0];
  const int cy = spec_.dim == 1 ? 1 : spec_.cells[1];

  std::vector<Eigen::Triplet<double>> mt;
  std::vector<Eigen::Triplet<double>> st;
  mt.reserve(static_cast<std::size_t>(cx) * cy * cq.local_nodes * cq.local_nodes);
  st.reserve(mt.capacity());

  // All cells are congruent, so the element matrices are computed once.
  const int ln = cq.local_nodes;
  std::vector<double> me(ln * ln, 0.0), se(ln * ln, 0.0);
  for (std::size_t q = 0; q < cq.weight.size(); ++q) {
    for (int a = 0; a < ln; ++a) {
      for (int b = 0; b < ln; ++b) {
        me[a * ln + b] += cq.weight[q] * cq.shape[q][a] * cq.shape[q][b];
        se[a * ln + b] += cq.weight[q] * (cq.grad[q][a][0] * cq.grad[q][b][0] +
                                          cq.grad[q][a][1] * cq.grad[q][b][1]);
      }
    }
  }
  for (int cj = 0; cj < cy; ++cj) {
    for (int ci = 0; ci < cx; ++ci) {
      const auto nodes = cell_nodes(spec_, ci, cj);
      for (int a = 0; a < ln; ++a) {
        for (int b = 0; b < ln; ++b) {
          mt.emplace_back(nodes[a], nodes[b], me[a * ln + b]);
          st.emplace_back(nodes[a], nodes[b], se[a * ln + b]);
        }
      }
    }
  }
  mass_.resize(n, n);
  stiffness_.resize(n, n);
  mass_.setFromTriplets(mt.begin(), mt.end());
  stiffness_.setFromTriplets(st.begin(), st.end());
  // Triplet summation order differs between (i,j) and (j,i); averaging with
  // the transpose makes both matrices exactly symmetric.
  mass_ = SparseMatrix(0.5 * (mass_ + SparseMatrix(mass_.transpose())));
  stiffness_ = SparseMatrix(0.5 * (stiffness_ + SparseMatrix(stiffness_.transpose())));
  mass_.makeCompressed();
  stiffness_.makeCompressed();
  shifted_ = stiffness_ + mass_;
  shifted_.makeCompressed();

  auto factor = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(mass_);
  if (factor->info() != Eigen::Success) throw std::runtime_error("mass matrix factorization failed");
  mass_factor_ = std::move(factor);
  // Three points per axis integrate cubic nonlinearities of Q1 fields times a basis function exactly.
  load_rule_ = std::make_shared<const CellQuadrature>(cell_quadrature(spec_, 3));
}

std::array<double, 2> GridOperators::node(int k) const {
  const int nx = spec_.nodes_along(0);
  const int i = k % nx;
  const int j = k / nx;
  return {i * spec_.spacing(0), spec_.dim == 1 ? 0.0 : j * spec_.spacing(1)};
}

Vector GridOperators::interpolate(const std::function<double(double, double)>& fn) const {
  Vector out(size());
  for (int k = 0; k < size(); ++k) {
    const auto x = node(k);
    out[k] = fn(x[0], x[1]);
  }
  return out;
}

Vector GridOperators::solve_mass(const Vector& rhs) const {
  if (rhs.size() != size()) throw std::invalid_argument("mass solve: dimension mismatch");
  return mass_factor_->solve(rhs);
}

Matrix GridOperators::solve_mass(const Matrix& rhs) const {
  if (rhs.rows() != size()) throw std::invalid_argument("mass solve: dimension mismatch");
  return mass_factor_->solve(rhs);
}

template <typename Body>
void GridOperators::for_each_quadrature_point(Body&& body) const {
  const CellQuadrature& cq = *load_rule_;
  const int cx = spec_.cells[0];
  const int cy = spec_.dim == 1 ? 1 : spec_.cells[1];
  for (int cj = 0; cj < cy; ++cj) {
    for (int ci = 0; ci < cx; ++ci) {
      const auto nodes = cell_nodes(spec_, ci, cj);
      for (std::size_t q = 0; q < cq.weight.size(); ++q) {
        body(nodes, cq.local_nodes, cq.shape[q], cq.weight[q]);
      }
    }
  }
}

Vector GridOperators::nonlinear_load(const Vector& u, const std::function<double(double)>& fn) const {
  if (u.size() != size()) throw std::invalid_argument("nonlinear load: dimension mismatch");
  Vector load = Vector::Zero(size());
  for_each_quadrature_point([&](const std::array<int, 4>& nodes, int ln,
                                const std::vector<double>& shape, double w) {
    double uq = 0.0;
    for (int a = 0; a < ln; ++a) uq += shape[a] * u[nodes[a]];
    const double fq = w * fn(uq);
    for (int a = 0; a < ln; ++a) load[nodes[a]] += fq * shape[a];
  });
  return load;
}

Vector GridOperators::nonlinear_load(const Vector& u, const Vector& coeff,
                                     const std::function<double(double, double)>& fn) const {
  if (u.size() != size() || coeff.size() != size())
    throw std::invalid_argument("nonlinear load: dimension mismatch");
  Vector load = Vector::Zero(size());
  for_each_quadrature_point([&](const std::array<int, 4>& nodes, int ln,
                                const std::vector<double>& shape, double w) {
    double uq = 0.0, cq = 0.0;
    for (int a = 0; a < ln; ++a) {
      uq += shape[a] * u[nodes[a]];
      cq += shape[a] * coeff[nodes[a]];
    }
    const double fq = w * fn(uq, cq);
    for (int a = 0; a < ln; ++a) load[nodes[a]] += fq * shape[a];
  });
  return load;
}

double GridOperators::integrate(const Vector& u, const std::function<double(double)>& fn) const {
  if (u.size() != size()) throw std::invalid_argument("integrate: dimension mismatch");
  double total = 0.0;
  for_each_quadrature_point([&](const std::array<int, 4>& nodes, int ln,
                                const std::vector<double>& shape, double w) {
    double uq = 0.0;
    for (int a = 0; a < ln; ++a) uq += shape[a] * u[nodes[a]];
    total += w * fn(uq);
  });
  return total;
}

GridOperators assemble(const GridSpec& spec) { return GridOperators(spec); }

double norm_H(const GridOperators& ops, const Vector& u) {
  check_size(ops, u);
  return std::sqrt(std::max(0.0, u.dot(ops.mass() * u)));
}

double seminorm_V0(const GridOperators& ops, const Vector& u) {
  check_size(ops, u);
  return std::sqrt(std::max(0.0, u.dot(ops.stiffness() * u)));
}

double norm_V(const GridOperators& ops, const Vector& u) {
  check_size(ops, u);
  return std::sqrt(std::max(0.0, u.dot(ops.shifted() * u)));
}

double norm_DA(const GridOperators& ops, const Vector& u) {
  check_size(ops, u);
  const Vector au = ops.shifted() * u;
  return std::sqrt(std::max(0.0, au.dot(ops.solve_mass(au))));
}

double seminorm_DA0(const GridOperators& ops, const Vector& u) {
  check_size(ops, u);
  const Vector su = ops.stiffness() * u;
  return std::sqrt(std::max(0.0, su.dot(ops.solve_mass(su))));
}

}  // namespace chstab
