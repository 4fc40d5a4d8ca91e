#include "chstab/projections.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace chstab {

namespace {

constexpr char kGainsMagic[8] = {'C', 'H', 'S', 'T', 'G', 'A', 'I', 'N'};
constexpr std::uint32_t kGainsVersion = 1;
constexpr double kMassSolveTolerance = 1e-12;

void check_length(const GridOperators& ops, const Vector& y) {
  if (y.size() != ops.size()) throw std::invalid_argument("node vector length does not match grid");
}

Matrix invert_gram(const Matrix& g, double floor, const char* name) {
  for (Eigen::Index j = 0; j < g.rows(); ++j) {
    if (!(g(j, j) > floor)) {
      throw std::runtime_error(std::string(name) + " Gram matrix diagonal entry " +
                               std::to_string(j) + " is not above the positivity floor;"
                               " an actuator box is unresolved by the mesh");
    }
  }
  Eigen::FullPivLU<Matrix> lu(g);
  if (!lu.isInvertible()) throw std::runtime_error(std::string(name) + " Gram matrix is singular");
  return lu.inverse();
}

// Column-wise M^{-1} with a residual check.
Matrix checked_mass_solve(const GridOperators& ops, const Matrix& rhs) {
  Matrix x = ops.solve_mass(rhs);
  for (Eigen::Index j = 0; j < rhs.cols(); ++j) {
    const double bnorm = rhs.col(j).norm();
    if (bnorm == 0.0) continue;
    const double res = (ops.mass() * x.col(j) - rhs.col(j)).norm() / bnorm;
    if (res > kMassSolveTolerance) {
      throw std::runtime_error("mass solve residual " + std::to_string(res) +
                               " exceeds tolerance");
    }
  }
  return x;
}

// Largest eigenvalue of core * gram for SPD gram, via the symmetric form L^T core L.
double largest_reduced_eigenvalue(const Matrix& core, const Matrix& gram) {
  if (core.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("actuator Gram matrix is not SPD");
  const Matrix l = llt.matrixL();
  const Matrix sym = l.transpose() * core * l;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("reduced eigenproblem did not converge");
  return eig.eigenvalues().maxCoeff();
}

void write_matrix(std::ostream& os, const Matrix& m) {
  const std::int64_t rows = m.rows();
  const std::int64_t cols = m.cols();
  os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

bool read_matrix(std::istream& is, Matrix& m) {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  if (!is.read(reinterpret_cast<char*>(&rows), sizeof rows)) return false;
  if (!is.read(reinterpret_cast<char*>(&cols), sizeof cols)) return false;
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32)) return false;
  m.resize(rows, cols);
  return static_cast<bool>(
      is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size())));
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

std::string to_string(DAForm f) { return f == DAForm::paper ? "paper" : "full"; }
std::string to_string(VForm f) { return f == VForm::stiffness ? "stiffness" : "shifted"; }

DAForm parse_da_form(const std::string& s) {
  if (s == "paper") return DAForm::paper;
  if (s == "full") return DAForm::full;
  throw std::invalid_argument("unknown D(A) convention '" + s + "' (expected paper|full)");
}

VForm parse_v_form(const std::string& s) {
  if (s == "stiffness") return VForm::stiffness;
  if (s == "shifted") return VForm::shifted;
  throw std::invalid_argument("unknown V-form convention '" + s + "' (expected stiffness|shifted)");
}

CouplingMatrices assemble_coupling(const ActuatorFamily& fam, const GridOperators& ops,
                                   double floor_factor) {
  const double floor = floor_factor * ops.spec().volume();
  CouplingMatrices c;
  c.order_gram = fam.order_indicators.transpose() * (ops.mass() * fam.order_auxiliary);
  c.heat_gram = fam.heat_indicators.transpose() * (ops.mass() * fam.heat_auxiliary);
  c.order_inverse = invert_gram(c.order_gram, floor, "order");
  c.heat_inverse = invert_gram(c.heat_gram, floor, "heat");
  return c;
}

Vector project_tilde(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                     const GridOperators& ops, const Vector& y, Family which) {
  check_length(ops, y);
  const Vector moments = fam.indicators(which).transpose() * (ops.mass() * y);
  return fam.auxiliary(which) * (coupling.inverse(which) * moments);
}

Vector project_actuator(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                        const GridOperators& ops, const Vector& y, Family which) {
  check_length(ops, y);
  const Vector moments = fam.auxiliary(which).transpose() * (ops.mass() * y);
  return fam.indicators(which) * (coupling.inverse(which).transpose() * moments);
}

Vector apply_da_form(const GridOperators& ops, DAForm da, const Vector& u) {
  const SparseMatrix& k = da == DAForm::paper ? ops.stiffness() : ops.shifted();
  const Vector ku = k * u;
  return k * ops.solve_mass(ku);
}

Vector apply_v_form(const GridOperators& ops, VForm vf, const Vector& u) {
  return vf == VForm::stiffness ? Vector(ops.stiffness() * u) : Vector(ops.shifted() * u);
}

FeedbackGains build_gains(const ActuatorFamily& fam, const GridOperators& ops,
                          const CouplingMatrices& coupling, double lambda1, double lambda2,
                          DAForm da, VForm vform) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
    throw std::invalid_argument("feedback gains lambda must be nonnegative");

  FeedbackGains g;
  g.lambda1 = lambda1;
  g.lambda2 = lambda2;
  g.da = da;
  g.vform = vform;

  // R_1 = [U~]^T K (M^{-1} (K [U~])) without forming M^{-1}.
  const SparseMatrix& k1 = da == DAForm::paper ? ops.stiffness() : ops.shifted();
  const Matrix zeta = k1 * fam.order_auxiliary;
  const Matrix mz = checked_mass_solve(ops, zeta);
  g.order_form = zeta.transpose() * mz;

  const SparseMatrix& k2 = vform == VForm::stiffness ? ops.stiffness() : ops.shifted();
  g.heat_form = fam.heat_auxiliary.transpose() * (k2 * fam.heat_auxiliary);

  const Matrix& q1 = coupling.order_inverse;
  const Matrix& q2 = coupling.heat_inverse;
  g.order_core = q1.transpose() * g.order_form * q1;
  g.heat_core = q2.transpose() * g.heat_form * q2;

  const Matrix um = (ops.mass() * fam.order_indicators).transpose();
  const Matrix vm = (ops.mass() * fam.heat_indicators).transpose();
  g.order_gain = -lambda1 * (g.order_core * um);
  g.heat_gain = -lambda2 * (g.heat_core * vm);
  return g;
}

FeedbackLoad feedback_load(const FeedbackGains& gains, const ActuatorFamily& fam,
                           const GridOperators& ops, const Vector& diff, Family which) {
  check_length(ops, diff);
  FeedbackLoad out;
  out.coords = gains.gain(which) * diff;
  out.load = ops.mass() * (fam.indicators(which) * out.coords);
  return out;
}

double projection_operator_norm(const ActuatorFamily& fam, const CouplingMatrices& coupling,
                                const GridOperators& ops, Family which) {
  // ||P y||_M^2 = y^T (M U) Q^T (U~^T M U~) Q (M U)^T y, so the nonzero
  // spectrum of the pencil (P^T M P, M) is that of X * (U^T M U).
  const Matrix& u = fam.indicators(which);
  const Matrix& ut = fam.auxiliary(which);
  const Matrix& q = coupling.inverse(which);
  const Matrix x = q.transpose() * (ut.transpose() * (ops.mass() * ut)) * q;
  const Matrix gu = u.transpose() * (ops.mass() * u);
  return std::sqrt(largest_reduced_eigenvalue(x, gu));
}

std::string GainsKey::file_stem() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "gains_%016llx_M%d_l1_%.17g_l2_%.17g_%s_%s",
                static_cast<unsigned long long>(grid), level, lambda1, lambda2,
                to_string(da).c_str(), to_string(vform).c_str());
  return buf;
}

void save_gains(const std::filesystem::path& path, const GainsKey& key, const FeedbackGains& gains) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write gains cache " + tmp);
    os.write(kGainsMagic, sizeof kGainsMagic);
    write_pod(os, kGainsVersion);
    write_pod(os, key.grid);
    write_pod(os, static_cast<std::int32_t>(key.level));
    write_pod(os, key.lambda1);
    write_pod(os, key.lambda2);
    write_pod(os, static_cast<std::int32_t>(key.da));
    write_pod(os, static_cast<std::int32_t>(key.vform));
    for (const Matrix* m : {&gains.order_gain, &gains.heat_gain, &gains.order_form, &gains.heat_form,
                            &gains.order_core, &gains.heat_core}) {
      write_matrix(os, *m);
    }
    if (!os) throw std::runtime_error("failed writing gains cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<FeedbackGains> load_gains(const std::filesystem::path& path, const GainsKey& key) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[sizeof kGainsMagic];
  std::uint32_t version = 0;
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kGainsMagic))
    return std::nullopt;
  if (!read_pod(is, version) || version != kGainsVersion) return std::nullopt;

  GainsKey stored;
  std::int32_t level = 0, da = 0, vform = 0;
  if (!read_pod(is, stored.grid) || !read_pod(is, level) || !read_pod(is, stored.lambda1) ||
      !read_pod(is, stored.lambda2) || !read_pod(is, da) || !read_pod(is, vform)) {
    return std::nullopt;
  }
  stored.level = level;
  stored.da = static_cast<DAForm>(da);
  stored.vform = static_cast<VForm>(vform);
  if (!(stored == key)) return std::nullopt;

  FeedbackGains g;
  g.lambda1 = key.lambda1;
  g.lambda2 = key.lambda2;
  g.da = key.da;
  g.vform = key.vform;
  for (Matrix* m : {&g.order_gain, &g.heat_gain, &g.order_form, &g.heat_form, &g.order_core,
                    &g.heat_core}) {
    if (!read_matrix(is, *m)) return std::nullopt;
  }
  return g;
}

FeedbackGains cached_gains(const ActuatorFamily& fam, const GridOperators& ops,
                           const CouplingMatrices& coupling, double lambda1, double lambda2,
                           DAForm da, VForm vform, std::optional<std::filesystem::path> cache_dir) {
  if (!cache_dir) {
    if (const char* env = std::getenv("CHSTAB_CACHE_DIR"); env != nullptr && *env != '\0')
      cache_dir = env;
  }
  if (!cache_dir) return build_gains(fam, ops, coupling, lambda1, lambda2, da, vform);

  const GainsKey key{ops.spec().fingerprint(), fam.layout.level, lambda1, lambda2, da, vform};
  const auto path = *cache_dir / (key.file_stem() + ".bin");
  if (auto hit = load_gains(path, key)) {
    if (hit->order_gain.cols() == ops.size() && hit->order_gain.rows() == fam.layout.order_count() &&
        hit->heat_gain.rows() == fam.layout.heat_count()) {
      return *hit;
    }
  }
  FeedbackGains g = build_gains(fam, ops, coupling, lambda1, lambda2, da, vform);
  save_gains(path, key, g);
  return g;
}

}  // namespace chstab
