#include "fracdiff/fractional_fem.hpp"

#include "fracdiff/io.hpp"
#include "fracdiff/parallel.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace fracdiff {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Fourth central difference (step 1) of G(t) = t^{2+delta} evaluated at t = d,
// divided by delta, where delta = 1 - 2s.  Written so the delta -> 0 limit is
// exact and far-field values (d >= 4) avoid catastrophic cancellation via a
// binomial tail series.
double d4g_over_delta(double s, int d) {
  const double delta = 1.0 - 2.0 * s;
  if (d < 4) {
    static constexpr std::array<std::pair<int, double>, 5> kC4 = {
        {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}}};
    double acc = 0.0;
    for (const auto& [j, cj] : kC4) {
      const double t = std::abs(static_cast<double>(d + j));
      if (t != 0.0) {
        const double lt = std::log(t);
        acc += cj * t * t * (delta != 0.0 ? std::expm1(delta * lt) / delta : lt);
      }
    }
    return acc;
  }
  double c = (2.0 + delta) * (1.0 + delta) * (delta - 1.0) / 24.0;
  double dk = std::pow(static_cast<double>(d), -4.0);
  double acc = c * (std::ldexp(1.0, 5) - 8.0) * dk;
  int k = 4;
  bool converged = false;
  while (k <= 200) {
    c *= (delta - (k - 2.0)) / (k + 1.0);
    c *= (delta - (k - 1.0)) / (k + 2.0);
    k += 2;
    dk /= static_cast<double>(d) * static_cast<double>(d);
    const double term = c * (std::ldexp(1.0, k + 1) - 8.0) * dk;
    acc += term;
    if (std::abs(term) <= 1e-18 * std::abs(acc)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw std::runtime_error(
        "stiffness entry at node distance " + std::to_string(d) + " (s=" +
        std::to_string(s) + "): far-field tail series did not converge");
  }
  return std::pow(static_cast<double>(d), 2.0 + delta) * acc;
}

// Closed-form stiffness entry for node distance d on a uniform mesh with
// spacing h (entry of the Toeplitz matrix, including the normalization
// constant and the 1/2 front factor of the symmetric double integral).
double entry_closed(double s, int d, double h) {
  const double delta = 1.0 - 2.0 * s;
  const double rho =
      delta != 0.0 ? delta / (2.0 * std::sin(kPi * delta / 2.0)) : 1.0 / kPi;
  return std::pow(h, delta) * rho * d4g_over_delta(s, d) /
         std::tgamma(3.0 + delta);
}

void check_order(double s) {
  if (!(s > 0.0 && s < 1.0)) {
    throw std::domain_error("fractional order s=" + std::to_string(s) +
                            " outside (0, 1)");
  }
}

// Hat functions supported on element e (global element index, 0-based):
// interior DOF index and slope on that element.  At most two entries.
struct ElementHats {
  int count = 0;
  int dof[2] = {-1, -1};
  double slope[2] = {0.0, 0.0};
};

ElementHats hats_on_element(int e, int n_intervals, double h) {
  ElementHats out;
  if (e >= 1) {
    out.dof[out.count] = e - 1;
    out.slope[out.count] = -1.0 / h;
    ++out.count;
  }
  if (e <= n_intervals - 2) {
    out.dof[out.count] = e;
    out.slope[out.count] = 1.0 / h;
    ++out.count;
  }
  return out;
}

// Piecewise-linear hat value of interior DOF i (centered at node i+1) at x.
double hat_value(double x, int dof, double h) {
  const double ctr = -1.0 + (dof + 1) * h;
  const double v = 1.0 - std::abs(x - ctr) / h;
  return v > 0.0 ? v : 0.0;
}

// All quadrature contributions owned by element e, accumulated into `a`.
// "Owned" means: the same-element square e x e, the pairs (e, f) for every
// f > e, and both exterior tails of functions restricted to e.  Summed over
// all e this reproduces the full double integral.
void accumulate_element(Eigen::MatrixXd& a, int e, const Mesh1D& mesh, double s,
                        double cs, const std::vector<double>& gl_pts,
                        const std::vector<double>& gl_wts) {
  const int n = mesh.n_intervals;
  const double h = mesh.dx;
  const int ng = static_cast<int>(gl_pts.size());
  const double front = 0.5 * cs;  // C(s)/2 convention of the bilinear form
  const ElementHats he = hats_on_element(e, n, h);
  const double xe0 = mesh.nodes[static_cast<std::size_t>(e)];

  // --- same element: exact power integral of |x-y|^{1-2s} ---
  {
    const double iss =
        2.0 * std::pow(h, 3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
    for (int ii = 0; ii < he.count; ++ii) {
      for (int jj = 0; jj < he.count; ++jj) {
        a(he.dof[ii], he.dof[jj]) += front * he.slope[ii] * he.slope[jj] * iss;
      }
    }
  }

  // --- adjacent pair (e, e+1): singular part exact, remainder by GL ---
  if (e + 1 < n) {
    const int f = e + 1;
    const ElementHats hf = hats_on_element(f, n, h);
    const double c_close = std::pow(h, 3.0 - 2.0 * s) / (3.0 - 2.0 * s);
    double j20 = c_close / 3.0;
    double j11 = c_close / 6.0;
    const double xm = 1.5 * h;  // midpoint of [h, 2h]
    const double xr = 0.5 * h;
    for (int q = 0; q < ng; ++q) {
      const double wv = xm + xr * gl_pts[q];
      const double wq = xr * gl_wts[q];
      const double kq = std::pow(wv, -1.0 - 2.0 * s);
      const double u = wv - h;
      const double l20 = (h * h * h - u * u * u) / 3.0;
      const double l11 = wv * (h * h - u * u) / 2.0 - l20;
      j20 += wq * kq * l20;
      j11 += wq * kq * l11;
    }
    // Slopes of each DOF on e and on f (zero when unsupported there).
    int ids[3];
    double me[3], mf[3];
    int nid = 0;
    auto add_dof = [&](int dof) {
      for (int t = 0; t < nid; ++t) {
        if (ids[t] == dof) return t;
      }
      ids[nid] = dof;
      me[nid] = 0.0;
      mf[nid] = 0.0;
      return nid++;
    };
    for (int ii = 0; ii < he.count; ++ii) me[add_dof(he.dof[ii])] = he.slope[ii];
    for (int ii = 0; ii < hf.count; ++ii) mf[add_dof(hf.dof[ii])] = hf.slope[ii];
    for (int ii = 0; ii < nid; ++ii) {
      for (int jj = 0; jj < nid; ++jj) {
        const double val = (me[ii] * me[jj] + mf[ii] * mf[jj]) * j20 +
                           (me[ii] * mf[jj] + mf[ii] * me[jj]) * j11;
        a(ids[ii], ids[jj]) += front * 2.0 * val;
      }
    }
  }

  // --- disjoint pairs (e, f), f >= e+2: smooth kernel, tensor GL ---
  for (int f = e + 2; f < n; ++f) {
    const ElementHats hf = hats_on_element(f, n, h);
    int ids[4];
    int nid = 0;
    auto add_dof = [&](int dof) {
      for (int t = 0; t < nid; ++t) {
        if (ids[t] == dof) return;
      }
      ids[nid++] = dof;
    };
    for (int ii = 0; ii < he.count; ++ii) add_dof(he.dof[ii]);
    for (int ii = 0; ii < hf.count; ++ii) add_dof(hf.dof[ii]);
    const double xf0 = mesh.nodes[static_cast<std::size_t>(f)];
    double acc[4][4] = {};
    for (int qx = 0; qx < ng; ++qx) {
      const double x = xe0 + 0.5 * h * (1.0 + gl_pts[qx]);
      const double wx = 0.5 * h * gl_wts[qx];
      for (int qy = 0; qy < ng; ++qy) {
        const double y = xf0 + 0.5 * h * (1.0 + gl_pts[qy]);
        const double wy = 0.5 * h * gl_wts[qy];
        const double kq = std::pow(std::abs(x - y), -1.0 - 2.0 * s);
        double dv[4];
        for (int t = 0; t < nid; ++t) {
          dv[t] = hat_value(x, ids[t], h) - hat_value(y, ids[t], h);
        }
        const double wxy = wx * wy * kq;
        for (int ii = 0; ii < nid; ++ii) {
          for (int jj = 0; jj < nid; ++jj) {
            acc[ii][jj] += wxy * dv[ii] * dv[jj];
          }
        }
      }
    }
    for (int ii = 0; ii < nid; ++ii) {
      for (int jj = 0; jj < nid; ++jj) {
        a(ids[ii], ids[jj]) += front * 2.0 * acc[ii][jj];
      }
    }
  }

  // --- exterior tails: y outside (-1, 1), u_i(y) = 0 there ---
  const double two_s = 2.0 * s;
  if (e == 0) {
    // Single rising hat; the left tail is an exact power integral, the right
    // tail has a smooth kernel on this element.
    const double exact =
        std::pow(h, 1.0 - 2.0 * s) / ((3.0 - 2.0 * s) * two_s);
    double smooth = 0.0;
    for (int q = 0; q < ng; ++q) {
      const double x = xe0 + 0.5 * h * (1.0 + gl_pts[q]);
      const double wq = 0.5 * h * gl_wts[q];
      const double t = (x + 1.0) / h;
      smooth += wq * t * t * std::pow(1.0 - x, -two_s) / two_s;
    }
    a(0, 0) += front * 2.0 * (exact + smooth);
  } else if (e == n - 1) {
    const double exact =
        std::pow(h, 1.0 - 2.0 * s) / ((3.0 - 2.0 * s) * two_s);
    double smooth = 0.0;
    for (int q = 0; q < ng; ++q) {
      const double x = xe0 + 0.5 * h * (1.0 + gl_pts[q]);
      const double wq = 0.5 * h * gl_wts[q];
      const double t = (1.0 - x) / h;
      smooth += wq * t * t * std::pow(x + 1.0, -two_s) / two_s;
    }
    a(n - 2, n - 2) += front * 2.0 * (exact + smooth);
  } else {
    for (int ii = 0; ii < he.count; ++ii) {
      for (int jj = 0; jj < he.count; ++jj) {
        double acc = 0.0;
        for (int q = 0; q < ng; ++q) {
          const double x = xe0 + 0.5 * h * (1.0 + gl_pts[q]);
          const double wq = 0.5 * h * gl_wts[q];
          const double vi = hat_value(x, he.dof[ii], h);
          const double vj = hat_value(x, he.dof[jj], h);
          acc += wq * vi * vj *
                 (std::pow(1.0 + x, -two_s) + std::pow(1.0 - x, -two_s)) /
                 two_s;
        }
        a(he.dof[ii], he.dof[jj]) += front * 2.0 * acc;
      }
    }
  }
}

// Elements owned by chunk c: {e : e mod n_chunks == c}, ascending.  The
// round-robin split balances the triangular pair loop across chunks while
// staying a pure function of (n_intervals, n_chunks).
Eigen::MatrixXd assemble_chunk(const Mesh1D& mesh, double s, double cs,
                               const std::vector<double>& gl_pts,
                               const std::vector<double>& gl_wts, int chunk,
                               int n_chunks) {
  const int m = mesh.n_interior();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int e = chunk; e < mesh.n_intervals; e += n_chunks) {
    accumulate_element(a, e, mesh, s, cs, gl_pts, gl_wts);
  }
  return a;
}

}  // namespace

Eigen::VectorXd Mesh1D::interior_coords() const {
  Eigen::VectorXd x(n_interior());
  for (int i = 0; i < n_interior(); ++i) {
    x[i] = nodes[static_cast<std::size_t>(i + 1)];
  }
  return x;
}

Mesh1D make_mesh(int n_intervals) {
  if (n_intervals < 4) {
    throw std::invalid_argument("make_mesh: n_intervals=" +
                                std::to_string(n_intervals) +
                                " is too coarse (need at least 4)");
  }
  Mesh1D mesh;
  mesh.n_intervals = n_intervals;
  mesh.dx = 2.0 / n_intervals;
  mesh.nodes.resize(static_cast<std::size_t>(n_intervals) + 1);
  for (int i = 0; i <= n_intervals; ++i) {
    mesh.nodes[static_cast<std::size_t>(i)] = -1.0 + i * mesh.dx;
  }
  mesh.nodes.front() = -1.0;
  mesh.nodes.back() = 1.0;
  return mesh;
}

double normalization_constant(double s) {
  check_order(s);
  return std::pow(2.0, 2.0 * s) * s * std::tgamma(s + 0.5) /
         (std::sqrt(kPi) * std::tgamma(1.0 - s));
}

NonlocalMatrices assemble_mass(const Mesh1D& mesh) {
  const int m = mesh.n_interior();
  NonlocalMatrices out;
  out.mass = Eigen::MatrixXd::Zero(m, m);
  const double h = mesh.dx;
  for (int i = 0; i < m; ++i) {
    out.mass(i, i) = 4.0 * h / 6.0;
    if (i + 1 < m) {
      out.mass(i, i + 1) = h / 6.0;
      out.mass(i + 1, i) = h / 6.0;
    }
  }
  return out;
}

NonlocalMatrices assemble_stiffness(const Mesh1D& mesh, double s) {
  check_order(s);
  NonlocalMatrices out = assemble_mass(mesh);
  out.s = s;
  out.c_ds = normalization_constant(s);
  const int m = mesh.n_interior();
  std::vector<double> col(static_cast<std::size_t>(m));
  for (int d = 0; d < m; ++d) {
    col[static_cast<std::size_t>(d)] = entry_closed(s, d, mesh.dx);
  }
  out.stiffness.resize(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      out.stiffness(i, j) = col[static_cast<std::size_t>(std::abs(i - j))];
    }
  }
  return out;
}

Eigen::MatrixXd assemble_stiffness_quadrature(const Mesh1D& mesh, double s,
                                              int n_gauss, bool use_openmp) {
  check_order(s);
  if (n_gauss < 2) {
    throw std::invalid_argument("assemble_stiffness_quadrature: n_gauss=" +
                                std::to_string(n_gauss) + " (need at least 2)");
  }
  std::vector<double> gl_pts, gl_wts;
  gauss_legendre_rule(n_gauss, gl_pts, gl_wts);
  const double cs = normalization_constant(s);
  const int n_chunks = parallel::chunk_count(mesh.n_intervals);
  std::vector<Eigen::MatrixXd> partials(static_cast<std::size_t>(n_chunks));
  if (use_openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int c = 0; c < n_chunks; ++c) {
      partials[static_cast<std::size_t>(c)] =
          assemble_chunk(mesh, s, cs, gl_pts, gl_wts, c, n_chunks);
    }
  } else {
    for (int c = 0; c < n_chunks; ++c) {
      partials[static_cast<std::size_t>(c)] =
          assemble_chunk(mesh, s, cs, gl_pts, gl_wts, c, n_chunks);
    }
  }
  Eigen::MatrixXd a = std::move(partials[0]);
  for (int c = 1; c < n_chunks; ++c) {
    a += partials[static_cast<std::size_t>(c)];
  }
  return a;
}

Eigen::VectorXd solve_stationary(const Mesh1D& mesh, double s,
                                 const Eigen::VectorXd& rhs) {
  if (rhs.size() != mesh.n_interior()) {
    throw std::invalid_argument(
        "solve_stationary: rhs has " + std::to_string(rhs.size()) +
        " entries, expected " + std::to_string(mesh.n_interior()));
  }
  const NonlocalMatrices mats = assemble_stiffness(mesh, s);
  Eigen::LLT<Eigen::MatrixXd> llt(mats.stiffness);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("solve_stationary: stiffness factorization failed");
  }
  return llt.solve(mats.mass * rhs);
}

Eigen::VectorXd stationary_profile(const Mesh1D& mesh, double s) {
  check_order(s);
  const double c_s = std::sqrt(kPi) * std::pow(2.0, -2.0 * s) /
                     (std::tgamma(s + 0.5) * std::tgamma(1.0 + s));
  const Eigen::VectorXd x = mesh.interior_coords();
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = c_s * std::pow(1.0 - x[i] * x[i], s);
  }
  return out;
}

void gauss_legendre_rule(int n, std::vector<double>& points,
                         std::vector<double>& weights) {
  if (n < 1) {
    throw std::invalid_argument("gauss_legendre_rule: n must be positive");
  }
  points.assign(static_cast<std::size_t>(n), 0.0);
  weights.assign(static_cast<std::size_t>(n), 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double xi = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * xi * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (xi * p0 - p1) / (xi * xi - 1.0);
      const double dx = p0 / pp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    points[static_cast<std::size_t>(i)] = -xi;
    points[static_cast<std::size_t>(n - 1 - i)] = xi;
    const double w = 2.0 / ((1.0 - xi * xi) * pp * pp);
    weights[static_cast<std::size_t>(i)] = w;
    weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
}

void dump_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("dump_matrix_csv: cannot open " + path);
  }
  out << "# rows=" << m.rows() << ", cols=" << m.cols() << "\n";
  out << "row,col,value\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) {
        out << i << "," << j << "," << io::fmt_g12(m(i, j)) << "\n";
      }
    }
  }
}

}  // namespace fracdiff
