#include "chstab/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace chstab {

namespace {

// Solves with a fixed sparse matrix, optionally corrected by a rank-m term
// E F^T through the Woodbury identity.
class LowRankSolver {
 public:
  LowRankSolver(SparseMatrix base, LinearSolver kind, double tolerance)
      : base_(std::move(base)), abs_base_(base_.cwiseAbs()), tolerance_(tolerance) {
    if (kind == LinearSolver::direct) {
      // Both stage matrices are symmetric; LDL^T also handles the saddle-point
      // form since its (1,1) block is definite. LU is the fallback.
      auto ldlt = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(base_);
      if (ldlt->info() == Eigen::Success) {
        solve_ = [ldlt](const Vector& b) -> Vector { return ldlt->solve(b); };
      } else {
        auto lu = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
        lu->analyzePattern(base_);
        lu->factorize(base_);
        if (lu->info() != Eigen::Success) throw std::runtime_error("stage matrix factorization failed");
        solve_ = [lu](const Vector& b) -> Vector { return lu->solve(b); };
      }
    } else {
      auto it = std::make_shared<Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>>>();
      it->preconditioner().setDroptol(1e-6);
      it->setTolerance(0.01 * tolerance);
      it->setMaxIterations(2000);
      it->compute(base_);
      if (it->info() != Eigen::Success) throw std::runtime_error("stage preconditioner setup failed");
      solve_ = [it](const Vector& b) -> Vector {
        Vector x = it->solve(b);
        if (it->info() != Eigen::Success) throw std::runtime_error("iterative stage solve did not converge");
        return x;
      };
    }
  }

  const SparseMatrix& base() const { return base_; }

  /// Installs the update base + left * right, with left n x m and right m x n.
  void set_update(Matrix left, Matrix right) {
    left_ = std::move(left);
    right_ = std::move(right);
    if (left_.cols() == 0) return;
    solved_left_.resize(left_.rows(), left_.cols());
    for (Eigen::Index j = 0; j < left_.cols(); ++j) solved_left_.col(j) = solve_(left_.col(j));
    const Matrix capacitance = Matrix::Identity(left_.cols(), left_.cols()) + right_ * solved_left_;
    capacitance_ = Eigen::PartialPivLU<Matrix>(capacitance);
  }

  Vector solve(const Vector& rhs) const {
    Vector x = solve_once(rhs);
    // Non-finite data is left to the caller's state check.
    if (!rhs.allFinite() || !x.allFinite()) return x;
    double rel = 0.0;
    for (int sweep = 0; sweep < 4; ++sweep) {
      // Componentwise backward-error scale: |b| + |A| |x| + |L| |R x|.
      Vector residual = rhs - base_ * x;
      Vector size = rhs.cwiseAbs() + abs_base_ * x.cwiseAbs();
      if (left_.cols() > 0) {
        const Vector rx = right_ * x;
        residual -= left_ * rx;
        size += left_.cwiseAbs() * rx.cwiseAbs();
      }
      const double scale = size.norm();
      rel = residual.norm() / std::max(scale, std::numeric_limits<double>::min());
      if (rel <= tolerance_ || !std::isfinite(rel)) return x;  // overflow is left to the state check
      x += solve_once(residual);  // iterative refinement
    }
    char msg[160];
    std::snprintf(msg, sizeof msg, "linear solve did not reach relative residual %.3g (got %.3g)",
                  tolerance_, rel);
    throw std::runtime_error(msg);
  }

 private:
  Vector solve_once(const Vector& rhs) const {
    Vector x = solve_(rhs);
    if (left_.cols() > 0) {
      const Vector c = capacitance_.solve(right_ * x);
      x -= solved_left_ * c;
    }
    return x;
  }

  SparseMatrix base_;
  SparseMatrix abs_base_;
  double tolerance_;
  std::function<Vector(const Vector&)> solve_;
  Matrix left_;
  Matrix right_;
  Matrix solved_left_;
  Eigen::PartialPivLU<Matrix> capacitance_;
};

SparseMatrix block_2x2(const SparseMatrix& a, const SparseMatrix& b, const SparseMatrix& c,
                       const SparseMatrix& d) {
  const Eigen::Index n = a.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() + b.nonZeros() + c.nonZeros() + d.nonZeros()));
  auto add = [&t](const SparseMatrix& m, Eigen::Index r0, Eigen::Index c0) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row() + r0), static_cast<int>(it.col() + c0), it.value());
  };
  add(a, 0, 0);
  add(b, 0, n);
  add(c, n, 0);
  add(d, n, n);
  SparseMatrix out(2 * n, 2 * n);
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

void PhysParams::validate() const {
  if (!(nu2 > 0.0)) throw std::invalid_argument("nu2 must be strictly positive");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be strictly positive");
  if (!std::isfinite(nu0) || !std::isfinite(nu1)) throw std::invalid_argument("nu0, nu1 must be finite");
  if (g) {
    if (g->a1 < 0.0 || g->a2 < 0.0) throw std::invalid_argument("g coefficients a1, a2 must be nonnegative");
  }
}

std::string to_string(FeedbackTreatment f) {
  return f == FeedbackTreatment::implicit ? "implicit" : "explicit";
}
std::string to_string(LinearSolver s) { return s == LinearSolver::direct ? "direct" : "iterative"; }

FeedbackTreatment parse_feedback_treatment(const std::string& s) {
  if (s == "implicit") return FeedbackTreatment::implicit;
  if (s == "explicit") return FeedbackTreatment::explicit_;
  throw std::invalid_argument("unknown feedback treatment '" + s + "' (expected implicit|explicit)");
}

LinearSolver parse_linear_solver(const std::string& s) {
  if (s == "direct") return LinearSolver::direct;
  if (s == "iterative") return LinearSolver::iterative;
  throw std::invalid_argument("unknown linear solver '" + s + "' (expected direct|iterative)");
}

std::string to_string(InitialKind k) {
  return k == InitialKind::reference ? "reference" : "controlled";
}

InitialKind parse_initial_kind(const std::string& s) {
  if (s == "reference") return InitialKind::reference;
  if (s == "controlled") return InitialKind::controlled;
  throw std::invalid_argument("unknown initial state '" + s + "' (expected reference|controlled)");
}

int SchemeConfig::step_count() const {
  return static_cast<int>(std::llround(final_time / dt));
}

std::optional<std::string> SchemeConfig::validate(const PhysParams& params) const {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(final_time > 0.0)) throw std::invalid_argument("final time must be positive");
  if (!(solve_tolerance > 0.0)) throw std::invalid_argument("solve tolerance must be positive");
  if (snapshot_stride < 0) throw std::invalid_argument("snapshot stride must be nonnegative");
  const double threshold = 4.0 * params.nu2 / params.tau;
  if (dt > 2.0 * threshold) {
    throw std::invalid_argument("time step " + std::to_string(dt) +
                                " exceeds twice the stability bound 4 nu2 / tau = " +
                                std::to_string(threshold));
  }
  if (dt >= threshold) {
    return "time step " + std::to_string(dt) + " is at or above the stability bound 4 nu2 / tau = " +
           std::to_string(threshold);
  }
  return std::nullopt;
}

std::pair<Vector, Vector> f_split(const Vector& y, double tau) {
  return {y.unaryExpr([tau](double v) { return f_explicit(v, tau); }),
          y.unaryExpr([tau](double v) { return f_implicit(v, tau); })};
}

Vector g_eval(const GFamily& gf, const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double a0 = gf.a0_field.size() ? gf.a0_field[k] : gf.a0;
    const double a1 = gf.a1_field.size() ? gf.a1_field[k] : gf.a1;
    const double a2 = gf.a2_field.size() ? gf.a2_field[k] : gf.a2;
    out[k] = a0 + a1 * w[k] + a2 * w[k] * (std::abs(w[k]) - 1.0);
  }
  return out;
}

std::pair<Vector, Vector> transform_to_w(const Vector& y1, const Vector& y2, double nu0) {
  return {y1, y2 + nu0 * y1};
}

std::pair<Vector, Vector> transform_to_y(const Vector& w1, const Vector& w2, double nu0) {
  return {w1, w2 - nu0 * w1};
}

Vector chemical_potential(const GridOperators& ops, const PhysParams& params, const Vector& w1) {
  const double tau = params.tau;
  const Vector rhs = params.nu2 * (ops.stiffness() * w1) +
                     params.nu0 * params.nu1 * (ops.mass() * w1) +
                     ops.nonlinear_load(w1, [tau](double v) { return f_full(v, tau); });
  return ops.solve_mass(rhs);
}

SimState initial_state(InitialKind kind, const GridOperators& ops, const PhysParams& params) {
  SimState s;
  s.t = 0.0;
  using std::numbers::pi;
  if (kind == InitialKind::reference) {
    s.w1 = ops.interpolate([](double x1, double) { return std::tanh(100.0 * (x1 - 0.5)); });
    s.w2 = Vector::Ones(ops.size());
  } else {
    s.w1 = ops.interpolate([](double x1, double x2) {
      return 0.3 + std::cos(2.0 * pi * x1) * std::cos(2.0 * pi * x2) / 100.0;
    });
    s.w2 = Vector::Zero(ops.size());
  }
  s.p = chemical_potential(ops, params, s.w1);
  return s;
}

double isothermal_energy(const GridOperators& ops, const PhysParams& params, const Vector& w1) {
  const double tau = params.tau;
  return 0.5 * params.nu2 * w1.dot(ops.stiffness() * w1) +
         ops.integrate(w1, [tau](double v) { return double_well(v, tau); });
}

struct Stepper::Impl {
  std::unique_ptr<LowRankSolver> stage_a;
  std::unique_ptr<LowRankSolver> stage_b;
  Matrix order_load;  // M [U]
  Matrix heat_load;   // M [V]
  Vector force1;      // M h1
  Vector force2;      // M h2
};

Stepper::Stepper(const GridOperators& ops, PhysParams params, SchemeConfig scheme,
                 std::shared_ptr<const FeedbackSetup> feedback)
    : ops_(ops),
      params_(std::move(params)),
      scheme_(std::move(scheme)),
      feedback_(std::move(feedback)),
      impl_(std::make_unique<Impl>()) {
  params_.validate();
  scheme_.validate(params_);
  const int n = ops_.size();
  const double dt = scheme_.dt;
  const SparseMatrix& m = ops_.mass();
  const SparseMatrix& s = ops_.stiffness();

  const double c = params_.nu0 * params_.nu1 + 2.0 * params_.tau;
  // Symmetric arrangement of Stage A, unknowns (w1, p):
  //   (nu2 S + c M) w1 - M p    = -\int f_e(w1^n) phi
  //   -M w1         - dt S p    = -dt * (stage A right-hand side)
  SparseMatrix k = params_.nu2 * s + c * m;
  SparseMatrix neg_m = -m;
  SparseMatrix neg_s = -dt * s;
  impl_->stage_a = std::make_unique<LowRankSolver>(block_2x2(k, neg_m, neg_m, neg_s), scheme_.solver,
                                                   scheme_.solve_tolerance);
  SparseMatrix heat = m / dt + s;
  impl_->stage_b = std::make_unique<LowRankSolver>(heat, scheme_.solver, scheme_.solve_tolerance);

  if (params_.h1.size()) {
    if (params_.h1.size() != n) throw std::invalid_argument("h1 length does not match grid");
    impl_->force1 = m * params_.h1;
  }
  if (params_.h2.size()) {
    if (params_.h2.size() != n) throw std::invalid_argument("h2 length does not match grid");
    impl_->force2 = m * params_.h2;
  }

  if (feedback_) {
    const auto& fam = feedback_->family;
    const auto& gains = feedback_->gains;
    if (gains.order_gain.cols() != n || gains.heat_gain.cols() != n)
      throw std::invalid_argument("feedback gains do not match the grid");
    impl_->order_load = m * fam.order_indicators;
    impl_->heat_load = m * fam.heat_indicators;
    if (scheme_.feedback == FeedbackTreatment::implicit) {
      // Moving -M[U] F w^{n+1} to the left-hand side adds a rank-m term.
      const Eigen::Index mo = gains.order_gain.rows();
      Matrix left_a = Matrix::Zero(2 * n, mo);
      left_a.bottomRows(n) = dt * impl_->order_load;
      Matrix right_a = Matrix::Zero(mo, 2 * n);
      right_a.leftCols(n) = gains.order_gain;
      impl_->stage_a->set_update(std::move(left_a), std::move(right_a));
      impl_->stage_b->set_update(-impl_->heat_load, gains.heat_gain);
    }
  }
}

Stepper::~Stepper() = default;
Stepper::Stepper(Stepper&&) noexcept = default;

SimState Stepper::step(const SimState& state, const SimState* ref_now, const SimState* ref_next,
                       StepInputs* inputs) const {
  const int n = ops_.size();
  if (state.w1.size() != n || state.w2.size() != n) throw std::invalid_argument("state does not match grid");
  const double dt = scheme_.dt;
  const double tau = params_.tau;
  const SparseMatrix& m = ops_.mass();
  const SparseMatrix& s = ops_.stiffness();
  const bool implicit = scheme_.feedback == FeedbackTreatment::implicit;
  const SimState* target = implicit ? ref_next : ref_now;
  if (feedback_ && target == nullptr)
    throw std::invalid_argument("feedback stepping needs the reference state");

  // Stage A
  Vector rhs(2 * n);
  Vector r1 = m * state.w1 / dt + params_.nu1 * (s * state.w2);
  if (params_.g) r1 -= m * g_eval(*params_.g, state.w1);
  if (impl_->force1.size()) r1 += impl_->force1;
  // Implicit feedback is solved for the offset from the reference state at
  // t^{n+1}. The gain then acts on a small vector, which avoids cancellation
  // between F w^{n+1} and F w_r^{n+1}.
  const bool shifted = feedback_ && implicit;
  Vector u;
  if (feedback_ && !implicit) {
    u = feedback_->gains.order_gain * (state.w1 - target->w1);
    r1 += impl_->order_load * u;
  }
  rhs.head(n) = -ops_.nonlinear_load(state.w1, [tau](double v) { return f_explicit(v, tau); });
  rhs.tail(n) = -dt * r1;
  Vector x_ref;
  if (shifted) {
    x_ref = Vector::Zero(2 * n);
    x_ref.head(n) = target->w1;
    if (target->p.size() == n) x_ref.tail(n) = target->p;
    rhs -= impl_->stage_a->base() * x_ref;
  }
  Vector xa = impl_->stage_a->solve(rhs);
  if (shifted) {
    u = feedback_->gains.order_gain * xa.head(n);
    xa += x_ref;
  }

  SimState next;
  next.t = state.t + dt;
  next.w1 = xa.head(n);
  next.p = xa.tail(n);

  // Stage B
  Vector rb = m * state.w2 / dt + params_.nu0 * (s * next.w1);
  if (impl_->force2.size()) rb += impl_->force2;
  Vector v;
  if (feedback_ && !implicit) {
    v = feedback_->gains.heat_gain * (state.w2 - target->w2);
    rb += impl_->heat_load * v;
  }
  if (shifted) {
    rb -= impl_->stage_b->base() * target->w2;
    const Vector d = impl_->stage_b->solve(rb);
    v = feedback_->gains.heat_gain * d;
    next.w2 = target->w2 + d;
  } else {
    next.w2 = impl_->stage_b->solve(rb);
  }

  if (!all_finite(next.w1) || !all_finite(next.w2) || !all_finite(next.p)) {
    const long index = std::lround(next.t / dt);
    throw StepError("non-finite state at step " + std::to_string(index), index);
  }
  if (inputs) {
    inputs->order = feedback_ ? u : Vector();
    inputs->heat = feedback_ ? v : Vector();
  }
  return next;
}

}  // namespace chstab
