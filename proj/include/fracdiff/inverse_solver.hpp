#pragma once

#include "fracdiff/fractional_fem.hpp"
#include "fracdiff/rng.hpp"
#include "fracdiff/time_stepper.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fracdiff {

// Everything a functional/gradient/CGM evaluation needs, built once and
// shared: mesh, matrices and a marcher whose time-step matrix is already
// factored.
struct ForwardContext {
  Mesh1D mesh;
  NonlocalMatrices matrices;
  TimeGrid grid;
  std::shared_ptr<const L1Marcher> marcher;

  // Final-time snapshot of the source-free evolution from g.
  Eigen::VectorXd apply_forward(const Eigen::VectorXd& g) const {
    return marcher->forward_final(g);
  }
};

ForwardContext make_forward_context(double alpha, double s, int n_intervals,
                                    int n_steps, double T = 1.0);

// Mass-weighted inner product and norm on interior nodal vectors.
double l2_inner(const NonlocalMatrices& matrices, const Eigen::VectorXd& u,
                const Eigen::VectorXd& v);
double l2_norm(const NonlocalMatrices& matrices, const Eigen::VectorXd& u);

// Multiplicative uniform noise: h_i -> h_i + mu * h_i * (2r_i - 1) with r_i
// drawn in index order from PortableRng(seed).  theta is the mass-weighted
// norm of the perturbation; it is returned and also stored in `spec`.
struct NoiseSpec {
  double mu = 0.0;
  std::uint64_t seed = 0;
  double theta = 0.0;  // filled by add_noise
};

std::pair<Eigen::VectorXd, double> add_noise(const Eigen::VectorXd& h,
                                             NoiseSpec& spec,
                                             const NonlocalMatrices& matrices);

enum class GradientRoute { adjoint, self_adjoint, both_with_check };
enum class StopReason { discrepancy, max_iter };

struct CgmConfig {
  double gamma = 0.0;
  double sigma = 1.01;   // discrepancy factor
  int max_iter = 100;
  std::optional<Eigen::VectorXd> g0;  // default: constant-one field
  double eta = 1e-3;     // adjoint data-time smoothing width
  GradientRoute gradient_route = GradientRoute::self_adjoint;
  std::optional<double> theta_override;  // replaces the theta argument
};

struct CgmIteration {
  int k = 0;
  double zeta = 0.0;      // step size (NaN on the terminal row)
  double alpha_cc = 0.0;  // conjugation coefficient (NaN on the terminal row)
  double residual = 0.0;  // ||A g_k - h||_M
  double error = 0.0;     // ||g_k - g_truth||_M, NaN without ground truth
};

struct CgmTrace {
  std::vector<CgmIteration> iterations;  // rows k = 0..stopping_index
  int stopping_index = 0;
  StopReason stop_reason = StopReason::max_iter;
};

// Thrown by cgm_direction when the previous gradient is exactly zero: the
// iteration has converged and no new direction exists.
class CgmConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tikhonov objective 0.5*||A g - h||_M^2 + 0.5*gamma*||g||_M^2.
double tikhonov_value(const Eigen::VectorXd& g, const Eigen::VectorXd& h_noisy,
                      double gamma, const ForwardContext& context);

// Gradient of the objective.  The self-adjoint route reapplies the forward
// map to the residual; the adjoint route marches the companion problem
// backwards and takes the weighted time average at t=0 (piecewise-constant
// weights, the exact transpose of the marching scheme).  both_with_check
// computes the two and requires them to agree to 2% before returning the
// self-adjoint value.
Eigen::VectorXd gradient(const Eigen::VectorXd& g,
                         const Eigen::VectorXd& h_noisy, double gamma,
                         const ForwardContext& context,
                         GradientRoute route = GradientRoute::self_adjoint);

// Fletcher-Reeves direction update: d_k = -grad_k + alpha_cc * d_{k-1} with
// alpha_cc = ||grad_k||^2 / ||grad_{k-1}||^2 (mass-weighted).  Pass null
// pointers for the first iteration (alpha_cc = 0).  Throws CgmConverged when
// the previous gradient is exactly zero.
std::pair<Eigen::VectorXd, double> cgm_direction(
    const Eigen::VectorXd& grad_k, const Eigen::VectorXd* grad_prev,
    const Eigen::VectorXd* d_prev, const NonlocalMatrices& matrices);

// Exact line search along d.  Needs the current residual A g_k - h; pass it
// when already available (the iteration's single extra forward solve is then
// the one applied to d), otherwise it is recomputed internally.  Throws
// std::runtime_error on a degenerate direction (zero denominator).
double cgm_stepsize(const Eigen::VectorXd& g_k, const Eigen::VectorXd& d_k,
                    const Eigen::VectorXd& h_noisy, double gamma,
                    const ForwardContext& context,
                    const Eigen::VectorXd* residual = nullptr);

// Conjugate gradient iteration with Morozov stopping: iterate until
// ||A g_k - h||_M <= sigma * theta or k = max_iter.  Records one trace row
// per visited iterate.  theta = 0 disables the discrepancy test (fixed
// iteration count).  Throws std::runtime_error with a diagnostic if an
// iterate or step size becomes non-finite.
std::pair<Eigen::VectorXd, CgmTrace> run_cgm(
    const Eigen::VectorXd& h_noisy, double theta, const CgmConfig& config,
    const ForwardContext& context,
    const Eigen::VectorXd* ground_truth = nullptr);

// Heuristic regularization weight: 0 for exact data, else 1e-2 * theta^{4/5}.
double choose_gamma(double theta);

// Write a trace as CSV.  `preamble` lines are emitted first, each prefixed
// with "# ".  The column header is exactly "k, zeta, alpha_cc, residual,
// error".
void write_trace_csv(const CgmTrace& trace, const std::string& path,
                     const std::vector<std::string>& preamble = {});

}  // namespace fracdiff
