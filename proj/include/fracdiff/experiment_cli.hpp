#pragma once

#include "fracdiff/inverse_solver.hpp"
#include "fracdiff/spectral_oracle.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fracdiff {

enum class ExperimentKind {
  convergence_table,
  example_5_1,
  example_5_2,
  example_5_3,
  example_5_4,
  illposedness,
};

enum class GammaPolicy { zero, paper_formula, explicit_value };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::convergence_table;
  double alpha = 0.5;
  double s = 0.5;
  int N = 100;  // spatial intervals
  int K = 100;  // time steps
  double T = 1.0;
  std::vector<double> mu_list;  // empty: experiment-specific default
  std::uint64_t seed = 2026;
  GammaPolicy gamma_policy = GammaPolicy::zero;
  double gamma_value = 0.0;  // used when gamma_policy == explicit_value
  std::string output_dir = "out";
  double sigma = 1.01;
  double eta = 1e-3;
  int max_iter = 100;
  std::optional<double> theta_override;
  bool dump_matrices = false;
  bool dump_trajectory = false;
};

enum class TargetKind { trig, smooth, nonsmooth, manufactured, custom };

struct TargetFunction {
  TargetKind kind = TargetKind::trig;
  Eigen::VectorXd samples;  // used when kind == custom
};

// Interior-node samples of a target.  `s` is needed only by the
// `manufactured` kind (the stationary profile depends on the order).
Eigen::VectorXd sample_target(const TargetFunction& target, const Mesh1D& mesh,
                              double s);
TargetFunction default_target(ExperimentKind kind);

std::string experiment_name(ExperimentKind kind);
ExperimentKind experiment_from_name(const std::string& name);
std::string target_name(TargetKind kind);

// --- configuration ------------------------------------------------------

// Apply one "key=value" entry; throws std::invalid_argument naming unknown
// keys and out-of-range values.
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

// Parse a flat key=value file ('#' starts a comment).
ExperimentConfig parse_config(const std::string& path);

// Parse a list of key=value entries (CLI flags are routed through this).
ExperimentConfig parse_config(
    const std::vector<std::pair<std::string, std::string>>& entries);

// Canonical one-line-per-field rendering of a config (also the hash input).
std::vector<std::string> config_summary(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

// --- convergence study ----------------------------------------------------

// Least squares slope of log(error) against log(step).
double fit_loglog_slope(const std::vector<double>& steps,
                        const std::vector<double>& errors);

struct SweepResult {
  std::string sweep;    // "temporal" / "temporal_smooth" / "spatial_k<K>"
  std::string problem;  // short description of the manufactured solution
  double alpha = 0.0;
  double s = 0.0;
  double theoretical_rate = 0.0;
  std::vector<double> steps;
  std::vector<double> errors;        // used for the slope fit
  std::vector<double> errors_exact;  // against the continuum solution
  std::vector<double> pairwise;      // log2(err_i / err_{i+1})
  double slope = 0.0;
  bool monotone = true;
  std::vector<std::string> row_errors;  // per-row failure isolation
};

struct ConvergenceTable {
  std::vector<SweepResult> sweeps;
};

ConvergenceTable run_convergence_table(const ExperimentConfig& config);

// --- reconstruction experiments -------------------------------------------

struct WindowStat {
  double center = 0.0;
  double width = 0.0;
  double local_error = 0.0;  // discrete L2 (weight dx) over the window
};

struct ReconstructionMuResult {
  double mu = 0.0;
  double theta = 0.0;
  double gamma = 0.0;
  int stopping_index = 0;
  StopReason stop_reason = StopReason::max_iter;
  double final_error = 0.0;  // ||g* - g_exact||_M
  double global_l2 = 0.0;    // discrete L2 (weight dx) of g* - g_exact
  bool bracket_ok = true;
  Eigen::VectorXd g_final;
  CgmTrace trace;
  std::vector<WindowStat> windows;  // example_5_4 only
  std::string error_message;        // non-empty if this mu failed
};

struct ReconstructionResult {
  Eigen::VectorXd x;        // interior coordinates
  Eigen::VectorXd g_exact;  // target samples
  Eigen::VectorXd h_exact;  // synthesized data
  std::vector<ReconstructionMuResult> per_mu;
};

ReconstructionResult run_reconstruction(const ExperimentConfig& config,
                                        const TargetFunction& target);

// --- regularization comparison (example_5_2) -------------------------------

struct RegularizationRow {
  double mu = 0.0;
  double theta = 0.0;
  double gamma_formula = 0.0;
  double err_zero = 0.0;     // final error with gamma = 0
  double err_formula = 0.0;  // final error with the heuristic gamma
  double output_gap = 0.0;   // ||g_formula - g_zero||_M
  double exact_norm = 0.0;   // ||g_exact||_M
};

struct RegularizationTable {
  std::vector<RegularizationRow> light;  // mu <= 0.01
  std::vector<RegularizationRow> heavy;  // mu > 0.01
};

RegularizationTable run_regularization_comparison(
    const ExperimentConfig& config);

// --- ill-posedness demo -----------------------------------------------------

struct IllposednessResult {
  std::vector<IllposednessRow> rows;
  double max_amplification = 0.0;
  int argmax_p = 0;
  bool exceeds_1e3 = false;
  std::string verdict;
};

IllposednessResult run_illposedness(const ExperimentConfig& config);

// --- driver -----------------------------------------------------------------

// Run the configured experiment, write its CSV outputs under
// output_dir/<experiment>/<config-hash>/ and print a short summary to
// stdout.  Returns the process exit code (0 on success); error messages go
// to stderr as a single "error: ..." line.
int run_experiment(const ExperimentConfig& config);

}  // namespace fracdiff
