#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fracdiff {

// Uniform mesh of the interval (-1, 1).  Nodes are x_i = -1 + i*dx for
// i = 0..n_intervals; the unknowns of every discrete problem live on the
// interior nodes x_1..x_{n_intervals-1} (homogeneous volume constraint on
// the complement of the interval).
struct Mesh1D {
  int n_intervals = 0;          // N
  std::vector<double> nodes;    // N+1 node coordinates
  double dx = 0.0;              // 2 / N

  // Map a global node index (1..N-1) to its interior DOF index (0..N-2).
  int interior_index(int node) const { return node - 1; }
  int n_interior() const { return n_intervals - 1; }

  // Coordinates of the interior nodes as a dense vector.
  Eigen::VectorXd interior_coords() const;
};

// Build the uniform mesh.  Requires n_intervals >= 4.
Mesh1D make_mesh(int n_intervals);

// Normalization constant C(s) = 2^{2s} s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s))
// of the one-dimensional nonlocal operator.  Requires s in (0, 1);
// C(1/2) = 1/pi.
double normalization_constant(double s);

// Discrete operators of the P1 scheme on the interior DOFs.
struct NonlocalMatrices {
  Eigen::MatrixXd stiffness;  // dense symmetric positive definite
  Eigen::MatrixXd mass;       // tridiagonal (stored dense)
  double s = 0.0;             // fractional order used for the stiffness part
  double c_ds = 0.0;          // normalization constant C(s)
};

// Assemble mass and stiffness together for order s on the given mesh.
// The stiffness matrix is assembled from the closed-form Toeplitz entries
// (exact on a uniform mesh).  Throws std::domain_error for s outside (0,1)
// and std::runtime_error (naming the offending entry distance) if the tail
// series for a far-field entry fails to converge.
NonlocalMatrices assemble_stiffness(const Mesh1D& mesh, double s);

// Assemble only the mass part (stiffness left empty, s = 0).
NonlocalMatrices assemble_mass(const Mesh1D& mesh);

// Independent assembly of the same bilinear form by numerical quadrature
// (Gauss-Legendre panels plus exact treatment of the kernel singularity).
// This is the showcase parallel kernel: the OpenMP path and the serial
// reference path split the element loop into identical chunks and reduce
// the per-chunk partial matrices in a fixed order, so the two paths return
// bitwise-identical matrices.  Throws std::domain_error for invalid s and
// std::invalid_argument for n_gauss < 2.
Eigen::MatrixXd assemble_stiffness_quadrature(const Mesh1D& mesh, double s,
                                              int n_gauss = 12,
                                              bool use_openmp = true);

// Solve the stationary problem: stiffness * u = mass * rhs_samples, where
// rhs_samples holds point values of the right-hand side at interior nodes.
Eigen::VectorXd solve_stationary(const Mesh1D& mesh, double s,
                                 const Eigen::VectorXd& rhs);

// Interior-node samples of the exact stationary solution with unit
// right-hand side: c_s (1 - x^2)^s with
// c_s = sqrt(pi) 2^{-2s} / (Gamma(s + 1/2) Gamma(1 + s)).
Eigen::VectorXd stationary_profile(const Mesh1D& mesh, double s);

// Gauss-Legendre rule on [-1, 1] (Newton iteration on Legendre polynomials).
void gauss_legendre_rule(int n, std::vector<double>& points,
                         std::vector<double>& weights);

// Write a dense matrix as "row,col,value" triples (with header) to `path`.
void dump_matrix_csv(const Eigen::MatrixXd& m, const std::string& path);

}  // namespace fracdiff
