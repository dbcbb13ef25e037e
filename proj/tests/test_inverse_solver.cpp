#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracdiff/inverse_solver.hpp"
#include "fracdiff/rng.hpp"
#include "fracdiff/spectral_oracle.hpp"

using fracdiff::add_noise;
using fracdiff::CgmConfig;
using fracdiff::CgmConverged;
using fracdiff::CgmTrace;
using fracdiff::cgm_direction;
using fracdiff::cgm_stepsize;
using fracdiff::choose_gamma;
using fracdiff::ForwardContext;
using fracdiff::GradientRoute;
using fracdiff::gradient;
using fracdiff::l2_inner;
using fracdiff::l2_norm;
using fracdiff::make_forward_context;
using fracdiff::NoiseSpec;
using fracdiff::run_cgm;
using fracdiff::StopReason;
using fracdiff::tikhonov_value;

namespace {

double rel_err(double v, double ref) {
  return std::abs(v - ref) / std::abs(ref);
}

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  fracdiff::PortableRng rng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = 2.0 * rng.uniform01() - 1.0;
  return v;
}

Eigen::VectorXd trig_target(const ForwardContext& ctx) {
  const Eigen::VectorXd x = ctx.mesh.interior_coords();
  return ((x.array() * M_PI).cos() * (x.array() * M_PI).sin()).matrix();
}

}  // namespace

TEST_CASE("make_forward_context: wiring and inner products") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 20, 1.0);
  CHECK(ctx.mesh.n_intervals == 24);
  CHECK(ctx.grid.n_steps == 20);
  CHECK(ctx.grid.alpha == 0.5);
  CHECK(ctx.matrices.s == 0.5);
  REQUIRE(ctx.marcher != nullptr);

  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd u = random_vector(m, 1);
  const Eigen::VectorXd v = random_vector(m, 2);
  CHECK(rel_err(l2_inner(ctx.matrices, u, v), u.dot(ctx.matrices.mass * v)) <
        1e-14);
  CHECK(rel_err(l2_norm(ctx.matrices, u),
                std::sqrt(u.dot(ctx.matrices.mass * u))) < 1e-14);

  // apply_forward delegates to the shared marcher.
  const Eigen::VectorXd h1 = ctx.apply_forward(u);
  const Eigen::VectorXd h2 = ctx.marcher->forward_final(u);
  CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("add_noise: reproducible, bounded, theta recorded") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 32, 20, 1.0);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));

  NoiseSpec spec1{0.05, 42, 0.0};
  const auto [n1, theta1] = add_noise(h, spec1, ctx.matrices);
  CHECK(theta1 > 0.0);
  CHECK(spec1.theta == theta1);
  CHECK(rel_err(theta1, l2_norm(ctx.matrices, n1 - h)) < 1e-14);
  // Multiplicative bound |h_i^noisy - h_i| <= mu |h_i|.
  for (int i = 0; i < h.size(); ++i) {
    CHECK(std::abs(n1(i) - h(i)) <= 0.05 * std::abs(h(i)) + 1e-16);
  }

  // Identical seeds reproduce bitwise; different seeds do not.
  NoiseSpec spec2{0.05, 42, 0.0};
  const auto [n2, theta2] = add_noise(h, spec2, ctx.matrices);
  CHECK((n1 - n2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(theta2 == theta1);
  NoiseSpec spec3{0.05, 43, 0.0};
  const auto [n3, theta3] = add_noise(h, spec3, ctx.matrices);
  CHECK((n1 - n3).cwiseAbs().maxCoeff() > 0.0);
  CHECK(theta3 != theta1);

  // Zero noise level is the identity.
  NoiseSpec spec0{0.0, 7, 0.0};
  const auto [n0, theta0] = add_noise(h, spec0, ctx.matrices);
  CHECK((n0 - h).cwiseAbs().maxCoeff() == 0.0);
  CHECK(theta0 == 0.0);

  NoiseSpec bad{-0.1, 7, 0.0};
  CHECK_THROWS_AS(add_noise(h, bad, ctx.matrices), std::invalid_argument);
}

TEST_CASE("tikhonov_value: matches the quadratic definition") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 20, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g = random_vector(m, 3);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));
  const double misfit = l2_norm(ctx.matrices, ctx.apply_forward(g) - h);
  const double gn = l2_norm(ctx.matrices, g);
  CHECK(rel_err(tikhonov_value(g, h, 0.0, ctx), 0.5 * misfit * misfit) <
        1e-13);
  CHECK(rel_err(tikhonov_value(g, h, 0.02, ctx),
                0.5 * misfit * misfit + 0.5 * 0.02 * gn * gn) < 1e-13);
}

TEST_CASE("gradient: finite-difference check for both routes") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 24, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g = random_vector(m, 4);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));
  const double gamma = 1e-3;
  const double eps = 1e-5;

  for (GradientRoute route :
       {GradientRoute::self_adjoint, GradientRoute::adjoint}) {
    const Eigen::VectorXd grad = gradient(g, h, gamma, ctx, route);
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
      Eigen::VectorXd p = random_vector(m, seed);
      p /= l2_norm(ctx.matrices, p);
      const double fd = (tikhonov_value(g + eps * p, h, gamma, ctx) -
                         tikhonov_value(g - eps * p, h, gamma, ctx)) /
                        (2.0 * eps);
      const double dir = l2_inner(ctx.matrices, grad, p);
      CAPTURE(static_cast<int>(route));
      CAPTURE(seed);
      CHECK(rel_err(dir, fd) < 1e-4);
    }
  }
}

TEST_CASE("gradient: the two routes agree to machine precision") {
  const ForwardContext ctx = make_forward_context(0.3, 0.7, 32, 40, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g = random_vector(m, 5);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));

  const Eigen::VectorXd gs =
      gradient(g, h, 1e-3, ctx, GradientRoute::self_adjoint);
  const Eigen::VectorXd ga = gradient(g, h, 1e-3, ctx, GradientRoute::adjoint);
  const double gap = l2_norm(ctx.matrices, ga - gs);
  const double scale = l2_norm(ctx.matrices, gs);
  CHECK(gap <= 1e-10 * scale);  // far inside the 2% contract
  // The checked route returns without throwing and hands back the
  // self-adjoint value.
  const Eigen::VectorXd gb =
      gradient(g, h, 1e-3, ctx, GradientRoute::both_with_check);
  CHECK((gb - gs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cgm_direction: steepest descent start, conjugation, exhaustion") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 16, 10, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g1 = random_vector(m, 6);
  const Eigen::VectorXd g2 = random_vector(m, 7);

  const auto [d1, a1] = cgm_direction(g1, nullptr, nullptr, ctx.matrices);
  CHECK(a1 == 0.0);
  CHECK((d1 + g1).cwiseAbs().maxCoeff() == 0.0);

  const auto [d2, a2] = cgm_direction(g2, &g1, &d1, ctx.matrices);
  const double expect_a2 = l2_inner(ctx.matrices, g2, g2) /
                           l2_inner(ctx.matrices, g1, g1);
  CHECK(rel_err(a2, expect_a2) < 1e-13);
  const Eigen::VectorXd expect_d2 = -g2 + expect_a2 * d1;
  CHECK((d2 - expect_d2).cwiseAbs().maxCoeff() <=
        1e-14 * expect_d2.cwiseAbs().maxCoeff());

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);
  CHECK_THROWS_AS(cgm_direction(g2, &zero, &d1, ctx.matrices), CgmConverged);
}

TEST_CASE("cgm_stepsize: exact line search is stationary along the direction") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 20, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g = random_vector(m, 8);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));
  const double gamma = 1e-3;

  const Eigen::VectorXd grad = gradient(g, h, gamma, ctx);
  const auto [d, a] = cgm_direction(grad, nullptr, nullptr, ctx.matrices);
  const double zeta = cgm_stepsize(g, d, h, gamma, ctx);
  CHECK(std::isfinite(zeta));
  CHECK(zeta > 0.0);  // descent direction

  // phi'(zeta) = <A(g+zeta d) - h, A d> + gamma <g + zeta d, d> must vanish.
  const Eigen::VectorXd gn = g + zeta * d;
  const Eigen::VectorXd ad = ctx.apply_forward(d);
  const double deriv = l2_inner(ctx.matrices, ctx.apply_forward(gn) - h, ad) +
                       gamma * l2_inner(ctx.matrices, gn, d);
  const double scale = std::abs(l2_inner(ctx.matrices, ad, ad)) * std::abs(zeta);
  CHECK(std::abs(deriv) <= 1e-10 * std::max(scale, 1e-30));

  // Passing the cached residual gives the identical step.
  const Eigen::VectorXd r = ctx.apply_forward(g) - h;
  CHECK(cgm_stepsize(g, d, h, gamma, ctx, &r) == zeta);

  // A zero direction has a vanishing curvature denominator.
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);
  CHECK_THROWS_AS(cgm_stepsize(g, zero, h, 0.0, ctx), std::runtime_error);
}

TEST_CASE("run_cgm: rank-one problem converges in a single iteration") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 32, 20, 1.0);
  const fracdiff::EigenBasis basis = fracdiff::compute_eigenbasis(ctx.matrices, 1);
  const Eigen::VectorXd phi1 = basis.vectors.col(0);
  const Eigen::VectorXd h = ctx.apply_forward(phi1);

  CgmConfig config;
  config.max_iter = 1;
  config.g0 = Eigen::VectorXd::Zero(ctx.mesh.n_interior());
  const auto [g, trace] = run_cgm(h, 0.0, config, ctx, &phi1);
  REQUIRE(trace.iterations.size() == 2);  // k = 0 and the terminal k = 1 row
  CHECK(trace.iterations.back().error <= 1e-10);
  CHECK(l2_norm(ctx.matrices, g - phi1) <= 1e-10);
}

TEST_CASE("run_cgm: matches a hand-rolled iteration and decreases the objective") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 32, 24, 1.0);
  const int m = ctx.mesh.n_interior();
  const Eigen::VectorXd g_exact = trig_target(ctx);
  const Eigen::VectorXd h = ctx.apply_forward(g_exact);
  NoiseSpec spec{0.05, 77, 0.0};
  const auto [h_noisy, theta] = add_noise(h, spec, ctx.matrices);
  const double gamma = choose_gamma(theta);
  const int iters = 12;

  // Hand-rolled Fletcher-Reeves loop from the public pieces.
  Eigen::VectorXd g = Eigen::VectorXd::Ones(m);
  std::vector<double> residuals, objectives;
  Eigen::VectorXd grad_prev, d_prev;
  for (int k = 0; k < iters; ++k) {
    const Eigen::VectorXd r = ctx.apply_forward(g) - h_noisy;
    residuals.push_back(l2_norm(ctx.matrices, r));
    objectives.push_back(tikhonov_value(g, h_noisy, gamma, ctx));
    const Eigen::VectorXd grad = gradient(g, h_noisy, gamma, ctx);
    const auto [d, a] = cgm_direction(
        grad, k ? &grad_prev : nullptr, k ? &d_prev : nullptr, ctx.matrices);
    const double zeta = cgm_stepsize(g, d, h_noisy, gamma, ctx, &r);
    g += zeta * d;
    grad_prev = grad;
    d_prev = d;
  }
  // The exact line search makes the objective strictly nonincreasing.
  for (size_t k = 1; k < objectives.size(); ++k) {
    CHECK(objectives[k] <= objectives[k - 1] + 1e-12 * std::abs(objectives[0]));
  }

  // run_cgm with the discrepancy test disabled reproduces those residuals.
  CgmConfig config;
  config.gamma = gamma;
  config.max_iter = iters;
  const auto [g_run, trace] = run_cgm(h_noisy, 0.0, config, ctx, &g_exact);
  REQUIRE(trace.iterations.size() == static_cast<size_t>(iters) + 1);
  CHECK(trace.stop_reason == StopReason::max_iter);
  CHECK(trace.stopping_index == iters);
  for (int k = 0; k < iters; ++k) {
    CHECK(rel_err(trace.iterations[k].residual, residuals[k]) < 1e-12);
  }
  CHECK(l2_norm(ctx.matrices, g_run - g) <= 1e-10 * l2_norm(ctx.matrices, g));

  // Deterministic: a second run is bitwise identical.
  const auto [g_again, trace_again] = run_cgm(h_noisy, 0.0, config, ctx, &g_exact);
  CHECK((g_again - g_run).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run_cgm: discrepancy stopping brackets the noise level exactly") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 32, 32, 1.0);
  const Eigen::VectorXd g_exact = trig_target(ctx);
  const Eigen::VectorXd h = ctx.apply_forward(g_exact);
  NoiseSpec spec{0.05, 123, 0.0};
  const auto [h_noisy, theta] = add_noise(h, spec, ctx.matrices);

  CgmConfig config;
  config.sigma = 1.01;
  config.max_iter = 100;
  const auto [g, trace] = run_cgm(h_noisy, theta, config, ctx, &g_exact);
  REQUIRE(trace.stop_reason == StopReason::discrepancy);
  const int is = trace.stopping_index;
  REQUIRE(is >= 1);
  REQUIRE(trace.iterations.size() == static_cast<size_t>(is) + 1);
  const double level = config.sigma * theta;
  CHECK(trace.iterations[is].residual <= level);
  CHECK(trace.iterations[is - 1].residual > level);
  // The terminal row has no step data.
  CHECK(std::isnan(trace.iterations[is].zeta));
  CHECK(std::isnan(trace.iterations[is].alpha_cc));
  // Errors are recorded when the ground truth is supplied.
  CHECK(trace.iterations[is].error > 0.0);
  CHECK(trace.iterations[is].error < trace.iterations[0].error);
}

TEST_CASE("run_cgm: regularized long run drives the gradient down") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 24, 1.0);
  const Eigen::VectorXd g_exact = trig_target(ctx);
  const Eigen::VectorXd h = ctx.apply_forward(g_exact);
  const double gamma = 1e-3;

  CgmConfig config;
  config.gamma = gamma;
  config.max_iter = 60;
  const auto [g, trace] = run_cgm(h, 0.0, config, ctx, nullptr);
  CHECK(trace.stop_reason == StopReason::max_iter);

  const Eigen::VectorXd grad_end = gradient(g, h, gamma, ctx);
  const Eigen::VectorXd grad_start =
      gradient(Eigen::VectorXd::Ones(ctx.mesh.n_interior()), h, gamma, ctx);
  CHECK(l2_norm(ctx.matrices, grad_end) <=
        1e-3 * l2_norm(ctx.matrices, grad_start));
}

TEST_CASE("run_cgm: theta_override replaces the argument") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 24, 16, 1.0);
  const Eigen::VectorXd g_exact = trig_target(ctx);
  const Eigen::VectorXd h = ctx.apply_forward(g_exact);

  // Override down to zero: the (nonsense) theta argument is ignored and the
  // run goes the fixed number of iterations.
  CgmConfig config;
  config.max_iter = 5;
  config.theta_override = 0.0;
  const auto [g1, t1] = run_cgm(h, 1e9, config, ctx, nullptr);
  CHECK(t1.stop_reason == StopReason::max_iter);
  CHECK(t1.stopping_index == 5);

  // Override up to a huge level: stops before the first step.
  config.theta_override = 1e9;
  const auto [g2, t2] = run_cgm(h, 0.0, config, ctx, nullptr);
  CHECK(t2.stop_reason == StopReason::discrepancy);
  CHECK(t2.stopping_index == 0);
  CHECK(t2.iterations.size() == 1);

  // Validation.
  CgmConfig bad;
  bad.max_iter = -1;
  CHECK_THROWS_AS(run_cgm(h, 0.0, bad, ctx, nullptr), std::invalid_argument);
  CgmConfig bad2;
  bad2.g0 = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(run_cgm(h, 0.0, bad2, ctx, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(run_cgm(Eigen::VectorXd::Ones(2), 0.0, CgmConfig{}, ctx,
                          nullptr),
                  std::invalid_argument);
}

TEST_CASE("choose_gamma: heuristic values and validation") {
  CHECK(choose_gamma(0.0) == 0.0);
  const double theta = 0.0023;
  CHECK(rel_err(choose_gamma(theta), 1e-2 * std::pow(theta, 0.8)) < 1e-14);
  CHECK_THROWS_AS(choose_gamma(-1e-3), std::invalid_argument);
}

TEST_CASE("write_trace_csv: exact header and one row per iterate") {
  const ForwardContext ctx = make_forward_context(0.5, 0.5, 16, 10, 1.0);
  const Eigen::VectorXd h = ctx.apply_forward(trig_target(ctx));
  CgmConfig config;
  config.max_iter = 3;
  const auto [g, trace] = run_cgm(h, 0.0, config, ctx, nullptr);

  const std::string path = "test_trace_dump.csv";
  fracdiff::write_trace_csv(trace, path, {"run note"});
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# run note");
  std::getline(in, line);
  CHECK(line == "k, zeta, alpha_cc, residual, error");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == static_cast<int>(trace.iterations.size()));
  std::remove(path.c_str());
}
