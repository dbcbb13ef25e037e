#pragma once

#include "fracdiff/fractional_fem.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace fracdiff {

// Uniform time grid on [0, T] for the fractional order alpha.
struct TimeGrid {
  int n_steps = 0;     // K
  double dt = 0.0;     // T / K
  double T = 0.0;
  double alpha = 0.0;  // Caputo order, in (0, 1)
};

// Build the grid.  Requires n_steps >= 2, T > 0, alpha in (0, 1).
TimeGrid make_time_grid(int n_steps, double T, double alpha);

// Space-time trajectory: row n holds the interior nodal values at t_n.
struct SpaceTimeField {
  Eigen::MatrixXd values;  // (K+1) x (N-1)
  TimeGrid grid;
  Mesh1D mesh;
};

// Scaled history weights of the time discretization: w_j = beta0 * b_j with
// b_j = (j+1)^{1-alpha} - j^{1-alpha} and beta0 = dt^{-alpha} / Gamma(2-alpha)
// for j = 0..n-1.  They are positive, strictly decreasing, and telescope:
// sum_j b_j = n^{1-alpha}.
std::vector<double> l1_weights(double alpha, int n, double dt);

// Interior samples of the source term at a given time.
using SourceFn = std::function<Eigen::VectorXd(double)>;

// Implicit time marcher for the semidiscrete evolution problem
// M d_t^alpha u + S u = M f.  The matrix beta0*M + S is factored once in the
// constructor and reused by every step of every solve, which makes repeated
// forward solves (the dominant cost of the iterative reconstruction) cheap.
// The history combination is the showcase parallel kernel of this module:
// the OpenMP path parallelizes over degrees of freedom while keeping the
// per-DOF summation order identical to the serial reference, so both paths
// produce bitwise-identical trajectories.
class L1Marcher {
 public:
  L1Marcher(const Mesh1D& mesh, const NonlocalMatrices& matrices,
            const TimeGrid& grid, bool use_openmp = true);

  // March from initial value g with optional source; returns the trajectory.
  SpaceTimeField solve_forward(const Eigen::VectorXd& g,
                               const SourceFn& source = nullptr) const;

  // Final-time snapshot of the source-free problem (one forward solve).
  Eigen::VectorXd forward_final(const Eigen::VectorXd& g) const;

  // Backward-in-time companion problem driven by the residual, smoothed with
  // a Gaussian bump of width eta around the data time.  The returned field is
  // indexed in original time (its final row is identically zero).
  SpaceTimeField solve_adjoint(const Eigen::VectorXd& residual,
                               double eta) const;

  const TimeGrid& grid() const { return grid_; }
  const Mesh1D& mesh() const { return mesh_; }
  const Eigen::MatrixXd& mass() const { return mass_; }

 private:
  Eigen::MatrixXd march(const Eigen::VectorXd& u0,
                        const std::function<void(int, Eigen::VectorXd&)>&
                            add_source) const;
  void history_combination(const Eigen::MatrixXd& u, int n,
                           Eigen::VectorXd& hist) const;

  Mesh1D mesh_;
  TimeGrid grid_;
  Eigen::MatrixXd mass_;
  Eigen::LLT<Eigen::MatrixXd> llt_;  // of beta0*M + S
  std::vector<double> b_;            // unscaled b_j, j = 0..K-1
  std::vector<double> c_;            // c_[j-1] = b_{j-1} - b_j, j = 1..K-1
  double beta0_ = 0.0;
  bool use_openmp_ = true;
};

// One-shot helpers (assemble a marcher internally).
SpaceTimeField solve_forward(const Eigen::VectorXd& g, const SourceFn& source,
                             const Mesh1D& mesh,
                             const NonlocalMatrices& matrices,
                             const TimeGrid& grid);
SpaceTimeField solve_adjoint(const Eigen::VectorXd& residual,
                             const Mesh1D& mesh,
                             const NonlocalMatrices& matrices,
                             const TimeGrid& grid, double eta = 1e-3);

// Weighted time average of a trajectory with weight t^{-alpha}/Gamma(1-alpha):
// J(x) = (1/Gamma(1-alpha)) * integral_0^T t^{-alpha} z(x, t) dt, evaluated
// exactly for the piecewise-linear-in-time interpolant of z.
Eigen::VectorXd rl_integral_at_zero(const SpaceTimeField& z);

namespace detail {
// Same integral with a piecewise-constant (left endpoint) interpolant.  Its
// weights coincide with the transpose of the marching scheme, which is what
// the adjoint gradient route needs to match the algebraic transpose exactly.
Eigen::VectorXd rl_integral_at_zero_left(const SpaceTimeField& z);
}  // namespace detail

// Write a trajectory as "t,x,value" rows (with header) to `path`.
void dump_trajectory_csv(const SpaceTimeField& field, const std::string& path);

}  // namespace fracdiff
