#include "fracdiff/time_stepper.hpp"

#include "fracdiff/io.hpp"
#include "fracdiff/parallel.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace fracdiff {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error("time order alpha=" + std::to_string(alpha) +
                            " outside (0, 1)");
  }
}

}  // namespace

TimeGrid make_time_grid(int n_steps, double T, double alpha) {
  if (n_steps < 2) {
    throw std::invalid_argument("make_time_grid: n_steps=" +
                                std::to_string(n_steps) +
                                " is too coarse (need at least 2)");
  }
  if (!(T > 0.0)) {
    throw std::invalid_argument("make_time_grid: horizon T must be positive");
  }
  check_alpha(alpha);
  TimeGrid grid;
  grid.n_steps = n_steps;
  grid.T = T;
  grid.alpha = alpha;
  grid.dt = T / n_steps;
  return grid;
}

std::vector<double> l1_weights(double alpha, int n, double dt) {
  check_alpha(alpha);
  if (n < 1) {
    throw std::invalid_argument("l1_weights: need n >= 1");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("l1_weights: dt must be positive");
  }
  const double beta0 = std::pow(dt, -alpha) / std::tgamma(2.0 - alpha);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    w[static_cast<std::size_t>(j)] =
        beta0 * (std::pow(j + 1.0, 1.0 - alpha) - std::pow(double(j), 1.0 - alpha));
  }
  return w;
}

L1Marcher::L1Marcher(const Mesh1D& mesh, const NonlocalMatrices& matrices,
                     const TimeGrid& grid, bool use_openmp)
    : mesh_(mesh), grid_(grid), use_openmp_(use_openmp) {
  check_alpha(grid.alpha);
  const int m = mesh.n_interior();
  if (matrices.stiffness.rows() != m || matrices.stiffness.cols() != m ||
      matrices.mass.rows() != m || matrices.mass.cols() != m) {
    throw std::invalid_argument(
        "L1Marcher: matrix sizes do not match the mesh (" +
        std::to_string(m) + " interior nodes)");
  }
  mass_ = matrices.mass;
  beta0_ = std::pow(grid.dt, -grid.alpha) / std::tgamma(2.0 - grid.alpha);
  const int k = grid.n_steps;
  b_.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    b_[static_cast<std::size_t>(j)] = std::pow(j + 1.0, 1.0 - grid.alpha) -
                                      std::pow(double(j), 1.0 - grid.alpha);
  }
  c_.resize(static_cast<std::size_t>(k > 0 ? k - 1 : 0));
  for (int j = 1; j < k; ++j) {
    c_[static_cast<std::size_t>(j - 1)] =
        b_[static_cast<std::size_t>(j - 1)] - b_[static_cast<std::size_t>(j)];
  }
  llt_.compute(beta0_ * mass_ + matrices.stiffness);
  if (llt_.info() != Eigen::Success) {
    throw std::runtime_error(
        "L1Marcher: factorization of the time-step matrix failed");
  }
}

void L1Marcher::history_combination(const Eigen::MatrixXd& u, int n,
                                    Eigen::VectorXd& hist) const {
  const int m = static_cast<int>(u.cols());
  const double bn = b_[static_cast<std::size_t>(n - 1)];
  if (use_openmp_) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) {
      double acc = bn * u(0, i);
      for (int j = 1; j < n; ++j) {
        acc += c_[static_cast<std::size_t>(j - 1)] * u(n - j, i);
      }
      hist[i] = acc;
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double acc = bn * u(0, i);
      for (int j = 1; j < n; ++j) {
        acc += c_[static_cast<std::size_t>(j - 1)] * u(n - j, i);
      }
      hist[i] = acc;
    }
  }
}

Eigen::MatrixXd L1Marcher::march(
    const Eigen::VectorXd& u0,
    const std::function<void(int, Eigen::VectorXd&)>& add_source) const {
  const int k = grid_.n_steps;
  const int m = mesh_.n_interior();
  if (u0.size() != m) {
    throw std::invalid_argument("march: initial value has " +
                                std::to_string(u0.size()) +
                                " entries, expected " + std::to_string(m));
  }
  Eigen::MatrixXd u(k + 1, m);
  u.row(0) = u0.transpose();
  Eigen::VectorXd hist(m);
  Eigen::VectorXd rhs(m);
  for (int n = 1; n <= k; ++n) {
    history_combination(u, n, hist);
    rhs.noalias() = beta0_ * (mass_ * hist);
    if (add_source) {
      add_source(n, rhs);
    }
    u.row(n) = llt_.solve(rhs).transpose();
    if (!u.row(n).allFinite()) {
      throw std::runtime_error("march: non-finite state at step " +
                               std::to_string(n));
    }
  }
  return u;
}

SpaceTimeField L1Marcher::solve_forward(const Eigen::VectorXd& g,
                                        const SourceFn& source) const {
  SpaceTimeField field;
  field.grid = grid_;
  field.mesh = mesh_;
  if (source) {
    const double dt = grid_.dt;
    field.values = march(g, [&](int n, Eigen::VectorXd& rhs) {
      const Eigen::VectorXd f = source(n * dt);
      if (f.size() != rhs.size()) {
        throw std::invalid_argument(
            "solve_forward: source returned " + std::to_string(f.size()) +
            " values for " + std::to_string(rhs.size()) + " interior nodes");
      }
      rhs.noalias() += mass_ * f;
    });
  } else {
    field.values = march(g, nullptr);
  }
  return field;
}

Eigen::VectorXd L1Marcher::forward_final(const Eigen::VectorXd& g) const {
  return march(g, nullptr).row(grid_.n_steps).transpose();
}

SpaceTimeField L1Marcher::solve_adjoint(const Eigen::VectorXd& residual,
                                        double eta) const {
  if (!(eta > 0.0)) {
    throw std::invalid_argument("solve_adjoint: eta must be positive");
  }
  const int k = grid_.n_steps;
  const int m = mesh_.n_interior();
  if (residual.size() != m) {
    throw std::invalid_argument("solve_adjoint: residual has " +
                                std::to_string(residual.size()) +
                                " entries, expected " + std::to_string(m));
  }
  const double dt = grid_.dt;
  std::vector<double> ghat(static_cast<std::size_t>(k));
  for (int n = 1; n <= k; ++n) {
    ghat[static_cast<std::size_t>(n - 1)] =
        (std::erf(n * dt / eta) - std::erf((n - 1) * dt / eta)) / dt;
  }
  const Eigen::VectorXd mr = mass_ * residual;
  const Eigen::MatrixXd z =
      march(Eigen::VectorXd::Zero(m), [&](int n, Eigen::VectorXd& rhs) {
        rhs.noalias() += ghat[static_cast<std::size_t>(n - 1)] * mr;
      });
  SpaceTimeField field;
  field.grid = grid_;
  field.mesh = mesh_;
  field.values.resize(k + 1, m);
  for (int n = 0; n <= k; ++n) {
    field.values.row(n) = z.row(k - n);  // reindex to original time
  }
  return field;
}

SpaceTimeField solve_forward(const Eigen::VectorXd& g, const SourceFn& source,
                             const Mesh1D& mesh,
                             const NonlocalMatrices& matrices,
                             const TimeGrid& grid) {
  return L1Marcher(mesh, matrices, grid).solve_forward(g, source);
}

SpaceTimeField solve_adjoint(const Eigen::VectorXd& residual,
                             const Mesh1D& mesh,
                             const NonlocalMatrices& matrices,
                             const TimeGrid& grid, double eta) {
  return L1Marcher(mesh, matrices, grid).solve_adjoint(residual, eta);
}

namespace {

// Shared cell moments: i0_n = integral of t^{-alpha} over [t_n, t_{n+1}],
// i1_n = integral of t^{1-alpha} over the same cell.
void rl_check(const SpaceTimeField& z) {
  if (z.values.rows() != z.grid.n_steps + 1) {
    throw std::invalid_argument(
        "rl_integral_at_zero: field has " + std::to_string(z.values.rows()) +
        " rows, expected " + std::to_string(z.grid.n_steps + 1));
  }
  check_alpha(z.grid.alpha);
}

}  // namespace

Eigen::VectorXd rl_integral_at_zero(const SpaceTimeField& z) {
  rl_check(z);
  const int k = z.grid.n_steps;
  const double dt = z.grid.dt;
  const double alpha = z.grid.alpha;
  const double scale = 1.0 / std::tgamma(1.0 - alpha);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(z.values.cols());
  for (int n = 0; n < k; ++n) {
    const double t0 = n * dt;
    const double t1 = (n + 1) * dt;
    const double i0 =
        (std::pow(t1, 1.0 - alpha) - std::pow(t0, 1.0 - alpha)) / (1.0 - alpha);
    const double i1 =
        (std::pow(t1, 2.0 - alpha) - std::pow(t0, 2.0 - alpha)) / (2.0 - alpha);
    acc += z.values.row(n).transpose() * i0 +
           (z.values.row(n + 1) - z.values.row(n)).transpose() / dt *
               (i1 - t0 * i0);
  }
  return scale * acc;
}

namespace detail {

Eigen::VectorXd rl_integral_at_zero_left(const SpaceTimeField& z) {
  rl_check(z);
  const int k = z.grid.n_steps;
  const double dt = z.grid.dt;
  const double alpha = z.grid.alpha;
  const double scale = 1.0 / std::tgamma(1.0 - alpha);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(z.values.cols());
  for (int n = 0; n < k; ++n) {
    const double t0 = n * dt;
    const double t1 = (n + 1) * dt;
    const double i0 =
        (std::pow(t1, 1.0 - alpha) - std::pow(t0, 1.0 - alpha)) / (1.0 - alpha);
    acc += z.values.row(n).transpose() * i0;
  }
  return scale * acc;
}

}  // namespace detail

void dump_trajectory_csv(const SpaceTimeField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("dump_trajectory_csv: cannot open " + path);
  }
  const Eigen::VectorXd x = field.mesh.interior_coords();
  out << "# n_steps=" << field.grid.n_steps << ", dt=" << io::fmt_g12(field.grid.dt)
      << ", alpha=" << io::fmt_g12(field.grid.alpha) << "\n";
  out << "t,x,value\n";
  for (Eigen::Index n = 0; n < field.values.rows(); ++n) {
    const double t = static_cast<double>(n) * field.grid.dt;
    for (Eigen::Index i = 0; i < field.values.cols(); ++i) {
      out << io::fmt_g12(t) << "," << io::fmt_g12(x[i]) << ","
          << io::fmt_g12(field.values(n, i)) << "\n";
    }
  }
}

}  // namespace fracdiff
