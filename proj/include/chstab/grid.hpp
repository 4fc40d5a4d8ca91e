#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace chstab {

namespace detail {
struct CellQuadrature;
}

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Axis-aligned box domain [0,L_1] x ... x [0,L_d] split into a uniform grid
/// of multilinear (Q1) cells.
struct GridSpec {
  int dim = 2;
  std::array<double, 2> lengths{1.0, 1.0};
  std::array<int, 2> cells{2, 2};

  int nodes_along(int axis) const { return cells[axis] + 1; }
  int node_count() const;
  double spacing(int axis) const { return lengths[axis] / cells[axis]; }
  double volume() const;
  /// Stable 64-bit fingerprint, used to key cached data on disk.
  std::uint64_t fingerprint() const;

  /// Throws std::invalid_argument on bad dimension, lengths or cell counts.
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

/// Node index for lattice coordinates (i along x_1, j along x_2).
/// Ordering is lexicographic with x_2 slow and x_1 fast.
inline int node_index(const GridSpec& spec, int i, int j = 0) {
  return i + spec.nodes_along(0) * j;
}

/// Assembled discrete operators on a grid. Immutable once built and safe to
/// share between threads.
class GridOperators {
 public:
  explicit GridOperators(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  int size() const { return static_cast<int>(mass_.rows()); }

  /// Consistent mass matrix (Gram matrix of the nodal basis in L2).
  const SparseMatrix& mass() const { return mass_; }
  /// Stiffness matrix (Gram matrix of basis gradients).
  const SparseMatrix& stiffness() const { return stiffness_; }
  /// Shifted operator S + M realizing the V inner product.
  const SparseMatrix& shifted() const { return shifted_; }

  /// Coordinates of node k; the second entry is zero in 1-D.
  std::array<double, 2> node(int k) const;

  /// Evaluates a function at every node.
  Vector interpolate(const std::function<double(double, double)>& fn) const;

  /// Applies M^{-1} through a cached Cholesky factorization.
  Vector solve_mass(const Vector& rhs) const;
  Matrix solve_mass(const Matrix& rhs) const;

  /// Load vector b_i = \int fn(u_h) phi_i using a 3-point Gauss rule per axis.
  Vector nonlinear_load(const Vector& u, const std::function<double(double)>& fn) const;
  /// Same as nonlinear_load but with a nodal coefficient field: \int fn(u_h, a_h) phi_i.
  Vector nonlinear_load(const Vector& u, const Vector& coeff,
                        const std::function<double(double, double)>& fn) const;
  /// \int fn(u_h) over the domain with the same rule.
  double integrate(const Vector& u, const std::function<double(double)>& fn) const;

 private:
  template <typename Body>
  void for_each_quadrature_point(Body&& body) const;

  GridSpec spec_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
  SparseMatrix shifted_;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix>> mass_factor_;
  std::shared_ptr<const detail::CellQuadrature> load_rule_;
};

/// Builds the operators for a validated spec.
GridOperators assemble(const GridSpec& spec);

// Discrete norms. The D(A) form uses A_D = S + M; the seminorm uses S.
double norm_H(const GridOperators& ops, const Vector& u);
double seminorm_V0(const GridOperators& ops, const Vector& u);
double norm_V(const GridOperators& ops, const Vector& u);
double norm_DA(const GridOperators& ops, const Vector& u);
/// u^T S M^{-1} S u, the form used by the default feedback gain.
double seminorm_DA0(const GridOperators& ops, const Vector& u);

}  // namespace chstab
