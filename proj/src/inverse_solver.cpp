#include "fracdiff/inverse_solver.hpp"

#include "fracdiff/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace fracdiff {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd gradient_from_residual(const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& residual,
                                       double gamma,
                                       const ForwardContext& context,
                                       GradientRoute route) {
  auto self_adjoint = [&]() -> Eigen::VectorXd {
    Eigen::VectorXd grad = context.apply_forward(residual);
    if (gamma != 0.0) grad += gamma * g;
    return grad;
  };
  auto adjoint = [&](double eta) -> Eigen::VectorXd {
    const SpaceTimeField w = context.marcher->solve_adjoint(residual, eta);
    Eigen::VectorXd grad = detail::rl_integral_at_zero_left(w);
    if (gamma != 0.0) grad += gamma * g;
    return grad;
  };
  switch (route) {
    case GradientRoute::self_adjoint:
      return self_adjoint();
    case GradientRoute::adjoint:
      return adjoint(1e-3);
    case GradientRoute::both_with_check: {
      const Eigen::VectorXd gs = self_adjoint();
      const Eigen::VectorXd ga = adjoint(1e-3);
      const double ref = std::max(l2_norm(context.matrices, gs), 1e-300);
      const double rel = l2_norm(context.matrices, ga - gs) / ref;
      if (!(rel <= 0.02)) {
        throw std::runtime_error(
            "gradient: adjoint and self-adjoint routes disagree by " +
            std::to_string(rel) + " (relative, mass-weighted); limit is 0.02");
      }
      return gs;
    }
  }
  throw std::logic_error("gradient: unknown route");
}

}  // namespace

ForwardContext make_forward_context(double alpha, double s, int n_intervals,
                                    int n_steps, double T) {
  ForwardContext ctx;
  ctx.mesh = make_mesh(n_intervals);
  ctx.matrices = assemble_stiffness(ctx.mesh, s);
  ctx.grid = make_time_grid(n_steps, T, alpha);
  ctx.marcher = std::make_shared<L1Marcher>(ctx.mesh, ctx.matrices, ctx.grid);
  return ctx;
}

double l2_inner(const NonlocalMatrices& matrices, const Eigen::VectorXd& u,
                const Eigen::VectorXd& v) {
  return u.dot(matrices.mass * v);
}

double l2_norm(const NonlocalMatrices& matrices, const Eigen::VectorXd& u) {
  return std::sqrt(std::max(0.0, l2_inner(matrices, u, u)));
}

std::pair<Eigen::VectorXd, double> add_noise(const Eigen::VectorXd& h,
                                             NoiseSpec& spec,
                                             const NonlocalMatrices& matrices) {
  if (!(spec.mu >= 0.0)) {
    throw std::invalid_argument("add_noise: noise level mu must be >= 0");
  }
  PortableRng rng(spec.seed);
  Eigen::VectorXd noisy(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double r = rng.uniform01();
    noisy[i] = h[i] + spec.mu * h[i] * (2.0 * r - 1.0);
  }
  spec.theta = l2_norm(matrices, noisy - h);
  return {noisy, spec.theta};
}

double tikhonov_value(const Eigen::VectorXd& g, const Eigen::VectorXd& h_noisy,
                      double gamma, const ForwardContext& context) {
  const Eigen::VectorXd r = context.apply_forward(g) - h_noisy;
  const double misfit = l2_inner(context.matrices, r, r);
  const double penalty = gamma != 0.0 ? gamma * l2_inner(context.matrices, g, g) : 0.0;
  return 0.5 * (misfit + penalty);
}

Eigen::VectorXd gradient(const Eigen::VectorXd& g,
                         const Eigen::VectorXd& h_noisy, double gamma,
                         const ForwardContext& context, GradientRoute route) {
  const Eigen::VectorXd residual = context.apply_forward(g) - h_noisy;
  return gradient_from_residual(g, residual, gamma, context, route);
}

std::pair<Eigen::VectorXd, double> cgm_direction(
    const Eigen::VectorXd& grad_k, const Eigen::VectorXd* grad_prev,
    const Eigen::VectorXd* d_prev, const NonlocalMatrices& matrices) {
  if (grad_prev == nullptr || d_prev == nullptr) {
    return {-grad_k, 0.0};
  }
  const double prev2 = l2_inner(matrices, *grad_prev, *grad_prev);
  if (prev2 == 0.0) {
    throw CgmConverged(
        "cgm_direction: previous gradient is zero; iteration has converged");
  }
  const double cur2 = l2_inner(matrices, grad_k, grad_k);
  const double alpha_cc = cur2 / prev2;
  return {-grad_k + alpha_cc * (*d_prev), alpha_cc};
}

double cgm_stepsize(const Eigen::VectorXd& g_k, const Eigen::VectorXd& d_k,
                    const Eigen::VectorXd& h_noisy, double gamma,
                    const ForwardContext& context,
                    const Eigen::VectorXd* residual) {
  Eigen::VectorXd r_local;
  if (residual == nullptr) {
    r_local = context.apply_forward(g_k) - h_noisy;
    residual = &r_local;
  }
  const Eigen::VectorXd ud = context.apply_forward(d_k);
  double num = l2_inner(context.matrices, *residual, ud);
  double den = l2_inner(context.matrices, ud, ud);
  if (gamma != 0.0) {
    num += gamma * l2_inner(context.matrices, g_k, d_k);
    den += gamma * l2_inner(context.matrices, d_k, d_k);
  }
  if (den == 0.0 || !std::isfinite(den)) {
    throw std::runtime_error(
        "cgm_stepsize: degenerate search direction (denominator " +
        std::to_string(den) + ")");
  }
  return -num / den;
}

std::pair<Eigen::VectorXd, CgmTrace> run_cgm(
    const Eigen::VectorXd& h_noisy, double theta, const CgmConfig& config,
    const ForwardContext& context, const Eigen::VectorXd* ground_truth) {
  const int m = context.mesh.n_interior();
  if (h_noisy.size() != m) {
    throw std::invalid_argument("run_cgm: data has " +
                                std::to_string(h_noisy.size()) +
                                " entries, expected " + std::to_string(m));
  }
  if (config.max_iter < 0) {
    throw std::invalid_argument("run_cgm: max_iter must be >= 0");
  }
  const double theta_eff = config.theta_override.value_or(theta);
  const double level = config.sigma * theta_eff;

  Eigen::VectorXd g =
      config.g0.has_value() ? *config.g0 : Eigen::VectorXd::Ones(m);
  if (g.size() != m) {
    throw std::invalid_argument("run_cgm: initial guess size mismatch");
  }

  CgmTrace trace;
  trace.iterations.reserve(static_cast<std::size_t>(config.max_iter) + 1);

  Eigen::VectorXd d;          // current direction
  double prev_grad2 = 0.0;    // ||grad_{k-1}||_M^2
  bool have_direction = false;

  for (int k = 0;; ++k) {
    const Eigen::VectorXd residual = context.apply_forward(g) - h_noisy;
    CgmIteration row;
    row.k = k;
    row.zeta = kNan;
    row.alpha_cc = kNan;
    row.residual = l2_norm(context.matrices, residual);
    row.error = ground_truth != nullptr
                    ? l2_norm(context.matrices, g - *ground_truth)
                    : kNan;
    trace.iterations.push_back(row);

    if (theta_eff > 0.0 && row.residual <= level) {
      trace.stopping_index = k;
      trace.stop_reason = StopReason::discrepancy;
      break;
    }
    if (k == config.max_iter) {
      trace.stopping_index = k;
      trace.stop_reason = StopReason::max_iter;
      break;
    }

    Eigen::VectorXd grad = gradient_from_residual(g, residual, config.gamma,
                                                  context,
                                                  config.gradient_route);
    const double grad2 = l2_inner(context.matrices, grad, grad);
    double alpha_cc = 0.0;
    if (!have_direction) {
      d = -grad;
      have_direction = true;
    } else {
      if (prev_grad2 == 0.0) {
        // Converged exactly; keep the recorded row as the terminal one.
        trace.stopping_index = k;
        trace.stop_reason = theta_eff > 0.0 && row.residual <= level
                                ? StopReason::discrepancy
                                : StopReason::max_iter;
        break;
      }
      alpha_cc = grad2 / prev_grad2;
      d = -grad + alpha_cc * d;
    }
    prev_grad2 = grad2;

    const double zeta =
        cgm_stepsize(g, d, h_noisy, config.gamma, context, &residual);
    if (!std::isfinite(zeta)) {
      throw std::runtime_error(
          "run_cgm: non-finite step size at iteration " + std::to_string(k) +
          " (residual " + io::fmt_g12(row.residual) + ")");
    }
    trace.iterations.back().zeta = zeta;
    trace.iterations.back().alpha_cc = alpha_cc;
    g += zeta * d;
    if (!g.allFinite()) {
      throw std::runtime_error(
          "run_cgm: non-finite iterate after step " + std::to_string(k) +
          " (step size " + io::fmt_g12(zeta) + ")");
    }
  }
  return {g, trace};
}

double choose_gamma(double theta) {
  if (!(theta >= 0.0)) {
    throw std::invalid_argument("choose_gamma: theta must be >= 0");
  }
  if (theta == 0.0) return 0.0;
  return 1e-2 * std::pow(theta, 0.8);
}

void write_trace_csv(const CgmTrace& trace, const std::string& path,
                     const std::vector<std::string>& preamble) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_trace_csv: cannot open " + path);
  }
  for (const auto& line : preamble) {
    out << "# " << line << "\n";
  }
  out << "k, zeta, alpha_cc, residual, error\n";
  for (const auto& row : trace.iterations) {
    out << row.k << ", " << io::fmt_g12(row.zeta) << ", "
        << io::fmt_g12(row.alpha_cc) << ", " << io::fmt_g12(row.residual)
        << ", " << io::fmt_g12(row.error) << "\n";
  }
}

}  // namespace fracdiff
