#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "fracdiff/fractional_fem.hpp"
#include "fracdiff/parallel.hpp"
#include "fracdiff/time_stepper.hpp"

namespace {

// Quadrature assembly of the nonlocal stiffness matrix: every element pair
// is visited, so the cost grows quadratically with N.  The arg pair is
// (use_openmp, N); the serial run is the reference implementation the
// OpenMP kernel is validated against (bitwise) in the unit tests.
void BM_QuadratureAssembly(benchmark::State& state) {
  const bool use_openmp = state.range(0) != 0;
  const int n = static_cast<int>(state.range(1));
  const fracdiff::Mesh1D mesh = fracdiff::make_mesh(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        fracdiff::assemble_stiffness_quadrature(mesh, 0.5, 12, use_openmp));
  }
  state.SetLabel(use_openmp ? "openmp" : "serial");
}

// Closed-form assembly for scale: the production path costs O(N) distinct
// entries and is orders of magnitude cheaper than any quadrature.
void BM_ClosedFormAssembly(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const fracdiff::Mesh1D mesh = fracdiff::make_mesh(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fracdiff::assemble_stiffness(mesh, 0.5));
  }
}

// Full time march dominated by the history combination, whose cost grows
// like K^2 * N.  The factorization is done once outside the timing loop,
// exactly as the iterative reconstruction uses it.
void BM_ForwardMarch(benchmark::State& state) {
  const bool use_openmp = state.range(0) != 0;
  const int n = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  const fracdiff::Mesh1D mesh = fracdiff::make_mesh(n);
  const fracdiff::NonlocalMatrices mats = fracdiff::assemble_stiffness(mesh, 0.5);
  const fracdiff::TimeGrid grid = fracdiff::make_time_grid(k, 1.0, 0.5);
  const fracdiff::L1Marcher marcher(mesh, mats, grid, use_openmp);
  const Eigen::VectorXd psi = fracdiff::stationary_profile(mesh, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(marcher.forward_final(psi));
  }
  state.SetLabel(use_openmp ? "openmp" : "serial");
}

}  // namespace

BENCHMARK(BM_QuadratureAssembly)
    ->ArgNames({"omp", "N"})
    ->Args({0, 64})
    ->Args({1, 64})
    ->Args({0, 128})
    ->Args({1, 128})
    ->Unit(benchmark::kMillisecond);

BENCHMARK(BM_ClosedFormAssembly)
    ->ArgNames({"N"})
    ->Arg(64)
    ->Arg(128)
    ->Arg(512)
    ->Unit(benchmark::kMillisecond);

BENCHMARK(BM_ForwardMarch)
    ->ArgNames({"omp", "N", "K"})
    ->Args({0, 128, 200})
    ->Args({1, 128, 200})
    ->Args({0, 256, 400})
    ->Args({1, 256, 400})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
