#include "fracdiff/spectral_oracle.hpp"

#include "fracdiff/io.hpp"
#include "fracdiff/special_functions.hpp"

#include <Eigen/Eigenvalues>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace fracdiff {

namespace {

namespace fs = std::filesystem;

std::string cache_key(int n_interior, double s, int m) {
  std::ostringstream os;
  os << "eig_n" << n_interior << "_s" << io::fmt_g17(s) << "_m" << m << "_v1";
  return os.str();
}

fs::path cache_directory() {
  if (const char* env = std::getenv("FRACDIFF_CACHE_DIR")) {
    return fs::path(env);
  }
  return fs::path(".fracdiff_cache");
}

// Re-verify a candidate basis against the matrices it claims to diagonalize.
bool basis_is_valid(const EigenBasis& basis, const NonlocalMatrices& matrices) {
  const int n = static_cast<int>(matrices.stiffness.rows());
  if (basis.count < 1 || basis.vectors.rows() != n ||
      basis.vectors.cols() != basis.count ||
      basis.lambdas.size() != basis.count) {
    return false;
  }
  for (int k = 0; k < basis.count; ++k) {
    const double lambda = basis.lambdas[k];
    if (!(lambda > 0.0)) return false;
    if (k > 0 && basis.lambdas[k] < basis.lambdas[k - 1]) return false;
    const Eigen::VectorXd v = basis.vectors.col(k);
    const double res =
        (matrices.stiffness * v - lambda * (matrices.mass * v)).norm() /
        v.norm();
    if (!(res <= 1e-8 * lambda)) return false;
  }
  const Eigen::MatrixXd gram =
      basis.vectors.transpose() * matrices.mass * basis.vectors;
  const double ortho_err =
      (gram - Eigen::MatrixXd::Identity(basis.count, basis.count))
          .cwiseAbs()
          .maxCoeff();
  return ortho_err <= 1e-10;
}

EigenBasis compute_fresh(const NonlocalMatrices& matrices, int m) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      matrices.stiffness, matrices.mass,
      Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("compute_eigenbasis: eigen decomposition failed");
  }
  EigenBasis basis;
  basis.count = m;
  basis.lambdas = solver.eigenvalues().head(m);
  basis.vectors = solver.eigenvectors().leftCols(m);
  basis.mass = matrices.mass;
  if (!basis_is_valid(basis, matrices)) {
    throw std::runtime_error(
        "compute_eigenbasis: computed basis failed verification "
        "(eigen-residual above 1e-8*lambda or orthonormality above 1e-10)");
  }
  return basis;
}

bool load_basis(const fs::path& path, int n, int m, EigenBasis* out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string tag;
  int fn = 0;
  int fm = 0;
  in >> tag >> fn >> fm;
  if (!in || tag != "eigenbasis" || fn != n || fm != m) return false;
  out->count = m;
  out->lambdas.resize(m);
  out->vectors.resize(n, m);
  for (int k = 0; k < m; ++k) {
    in >> out->lambdas[k];
  }
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      in >> out->vectors(i, k);
    }
  }
  return static_cast<bool>(in);
}

void store_basis(const fs::path& path, const EigenBasis& basis) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) return;  // cache is best-effort
    out << "eigenbasis " << basis.vectors.rows() << " " << basis.count << "\n";
    for (int k = 0; k < basis.count; ++k) {
      out << io::fmt_g17(basis.lambdas[k]) << "\n";
    }
    for (int k = 0; k < basis.count; ++k) {
      for (Eigen::Index i = 0; i < basis.vectors.rows(); ++i) {
        out << io::fmt_g17(basis.vectors(i, k)) << "\n";
      }
    }
  }
  fs::rename(tmp, path, ec);
}

std::mutex g_memo_mutex;
std::map<std::string, EigenBasis>& memo() {
  static std::map<std::string, EigenBasis> m;
  return m;
}

Eigen::VectorXd attenuation_factors(const EigenBasis& basis, double alpha,
                                    double t, int count) {
  const double talpha = std::pow(t, alpha);
  Eigen::VectorXd e(count);
  for (int k = 0; k < count; ++k) {
    e[k] = ml_eval({alpha, 1.0}, -basis.lambdas[k] * talpha);
  }
  return e;
}

void check_alpha_t(double alpha, double t, const char* who) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error(std::string(who) + ": alpha=" +
                            std::to_string(alpha) + " outside (0, 1)");
  }
  if (!(t >= 0.0)) {
    throw std::invalid_argument(std::string(who) + ": negative time");
  }
}

}  // namespace

EigenBasis compute_eigenbasis(const NonlocalMatrices& matrices, int m) {
  const int n = static_cast<int>(matrices.stiffness.rows());
  if (n < 1 || matrices.stiffness.cols() != n || matrices.mass.rows() != n ||
      matrices.mass.cols() != n) {
    throw std::invalid_argument("compute_eigenbasis: empty or mismatched matrices");
  }
  if (m < 1 || m > n) {
    throw std::invalid_argument("compute_eigenbasis: basis size " +
                                std::to_string(m) + " exceeds DOF count " +
                                std::to_string(n));
  }
  const std::string key = cache_key(n, matrices.s, m);

  {
    std::lock_guard<std::mutex> lock(g_memo_mutex);
    auto it = memo().find(key);
    if (it != memo().end() && basis_is_valid(it->second, matrices)) {
      EigenBasis hit = it->second;
      hit.mass = matrices.mass;
      return hit;
    }
  }

  const fs::path path = cache_directory() / (io::fnv1a64_hex(key) + ".txt");
  EigenBasis basis;
  bool loaded = load_basis(path, n, m, &basis);
  if (loaded) {
    basis.mass = matrices.mass;
    loaded = basis_is_valid(basis, matrices);
  }
  if (!loaded) {
    basis = compute_fresh(matrices, m);
    store_basis(path, basis);
  }
  {
    std::lock_guard<std::mutex> lock(g_memo_mutex);
    memo()[key] = basis;
  }
  return basis;
}

Eigen::VectorXd forward_series(const Eigen::VectorXd& g,
                               const EigenBasis& basis, double alpha,
                               double t) {
  check_alpha_t(alpha, t, "forward_series");
  if (g.size() != basis.vectors.rows()) {
    throw std::invalid_argument("forward_series: value size mismatch");
  }
  const Eigen::VectorXd coeffs =
      basis.vectors.transpose() * (basis.mass * g);
  const Eigen::VectorXd e = attenuation_factors(basis, alpha, t, basis.count);
  return basis.vectors * coeffs.cwiseProduct(e);
}

Eigen::VectorXd inverse_series(const Eigen::VectorXd& h,
                               const EigenBasis& basis, double alpha, double T,
                               int truncation) {
  check_alpha_t(alpha, T, "inverse_series");
  if (h.size() != basis.vectors.rows()) {
    throw std::invalid_argument("inverse_series: data size mismatch");
  }
  if (truncation < 1 || truncation > basis.count) {
    throw std::invalid_argument("inverse_series: truncation " +
                                std::to_string(truncation) +
                                " outside 1.." + std::to_string(basis.count));
  }
  const Eigen::VectorXd coeffs =
      basis.vectors.transpose() * (basis.mass * h);
  const Eigen::VectorXd e = attenuation_factors(basis, alpha, T, truncation);
  Eigen::VectorXd amplified(truncation);
  for (int k = 0; k < truncation; ++k) {
    if (!(e[k] >= 1e-300)) {
      throw std::overflow_error(
          "inverse_series: attenuation factor underflow at mode " +
          std::to_string(k + 1) + " (lambda=" + std::to_string(basis.lambdas[k]) +
          "); the inversion is unstable at this truncation level");
    }
    amplified[k] = coeffs[k] / e[k];
  }
  return basis.vectors.leftCols(truncation) * amplified;
}

Eigen::VectorXd truncation_operator(const Eigen::VectorXd& g,
                                    const EigenBasis& basis, double alpha,
                                    double T, int n_modes) {
  check_alpha_t(alpha, T, "truncation_operator");
  if (g.size() != basis.vectors.rows()) {
    throw std::invalid_argument("truncation_operator: value size mismatch");
  }
  if (n_modes < 1 || n_modes > basis.count) {
    throw std::invalid_argument("truncation_operator: n_modes " +
                                std::to_string(n_modes) + " outside 1.." +
                                std::to_string(basis.count));
  }
  const Eigen::VectorXd coeffs =
      basis.vectors.leftCols(n_modes).transpose() * (basis.mass * g);
  const Eigen::VectorXd e = attenuation_factors(basis, alpha, T, n_modes);
  return basis.vectors.leftCols(n_modes) * coeffs.cwiseProduct(e);
}

std::vector<IllposednessRow> illposedness_demo(const EigenBasis& basis,
                                               double alpha, double T,
                                               int p_max) {
  check_alpha_t(alpha, T, "illposedness_demo");
  if (p_max < 1 || p_max > basis.count) {
    throw std::invalid_argument("illposedness_demo: p_max " +
                                std::to_string(p_max) + " outside 1.." +
                                std::to_string(basis.count));
  }
  const double talpha = std::pow(T, alpha);
  std::vector<IllposednessRow> rows;
  rows.reserve(static_cast<std::size_t>(p_max));
  for (int p = 1; p <= p_max; ++p) {
    const double lambda = basis.lambdas[p - 1];
    const double e = ml_eval({alpha, 1.0}, -lambda * talpha);
    IllposednessRow row;
    row.p = p;
    row.lambda_p = lambda;
    row.data_gap = 1.0 / std::sqrt(lambda);
    row.solution_gap = 1.0 / (std::sqrt(lambda) * e);
    row.amplification = 1.0 / e;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fracdiff
