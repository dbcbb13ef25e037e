#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <numeric>
#include <vector>

#include "fracdiff/fractional_fem.hpp"
#include "fracdiff/parallel.hpp"
#include "fracdiff/time_stepper.hpp"

using fracdiff::assemble_stiffness;
using fracdiff::assemble_stiffness_quadrature;
using fracdiff::parallel::chunk_bounds;
using fracdiff::parallel::chunk_count;
using fracdiff::L1Marcher;
using fracdiff::make_mesh;
using fracdiff::make_time_grid;
using fracdiff::Mesh1D;
using fracdiff::NonlocalMatrices;
using fracdiff::SpaceTimeField;
using fracdiff::stationary_profile;
using fracdiff::TimeGrid;

TEST_CASE("chunk_count: clamped between 1 and 8") {
  CHECK(chunk_count(0) == 1);
  CHECK(chunk_count(1) == 1);
  CHECK(chunk_count(5) == 5);
  CHECK(chunk_count(8) == 8);
  CHECK(chunk_count(9) == 8);
  CHECK(chunk_count(1000) == 8);
}

TEST_CASE("chunk_bounds: disjoint, ordered, covering, balanced") {
  for (int n : {1, 7, 8, 9, 100, 257}) {
    CAPTURE(n);
    const int chunks = chunk_count(n);
    int covered = 0;
    int prev_end = 0;
    int min_size = n, max_size = 0;
    for (int c = 0; c < chunks; ++c) {
      const auto [begin, end] = chunk_bounds(n, chunks, c);
      CHECK(begin == prev_end);  // contiguous, ascending
      CHECK(end >= begin);
      prev_end = end;
      covered += end - begin;
      min_size = std::min(min_size, end - begin);
      max_size = std::max(max_size, end - begin);
    }
    CHECK(prev_end == n);
    CHECK(covered == n);
    CHECK(max_size - min_size <= 1);  // balanced to within one item
  }
}

TEST_CASE("openmp flags are internally consistent") {
  CHECK(fracdiff::parallel::max_threads() >= 1);
  if (!fracdiff::parallel::openmp_enabled()) {
    CHECK(fracdiff::parallel::max_threads() == 1);
  }
}

TEST_CASE("quadrature assembly: parallel kernel is bitwise-reproducible") {
  // The OpenMP path must not merely approximate the serial reference: the
  // chunked reduction is ordered, so the two matrices agree bit for bit.
  for (double s : {0.2, 0.5, 0.9}) {
    for (int n : {8, 16, 33}) {
      CAPTURE(s);
      CAPTURE(n);
      const Mesh1D mesh = make_mesh(n);
      const Eigen::MatrixXd with_omp =
          assemble_stiffness_quadrature(mesh, s, 12, true);
      const Eigen::MatrixXd serial =
          assemble_stiffness_quadrature(mesh, s, 12, false);
      CHECK((with_omp - serial).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("history combination: parallel marcher is bitwise-reproducible") {
  const Mesh1D mesh = make_mesh(32);
  const NonlocalMatrices mats = assemble_stiffness(mesh, 0.5);
  const TimeGrid grid = make_time_grid(40, 1.0, 0.5);
  const Eigen::VectorXd psi = stationary_profile(mesh, 0.5);
  const auto source = [&](double t) {
    return Eigen::VectorXd::Constant(mesh.n_interior(), 1.0 + t * t);
  };

  const L1Marcher par(mesh, mats, grid, true);
  const L1Marcher ser(mesh, mats, grid, false);

  const SpaceTimeField f_par = par.solve_forward(psi, source);
  const SpaceTimeField f_ser = ser.solve_forward(psi, source);
  CHECK((f_par.values - f_ser.values).cwiseAbs().maxCoeff() == 0.0);

  const SpaceTimeField a_par = par.solve_adjoint(psi, 1e-3);
  const SpaceTimeField a_ser = ser.solve_adjoint(psi, 1e-3);
  CHECK((a_par.values - a_ser.values).cwiseAbs().maxCoeff() == 0.0);
}
