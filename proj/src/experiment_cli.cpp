#include "fracdiff/experiment_cli.hpp"

#include "fracdiff/io.hpp"
#include "fracdiff/special_functions.hpp"
#include "fracdiff/time_stepper.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fracdiff {

namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a number");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a number");
  }
  return out;
}

long long parse_ll(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not an integer");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not an integer");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a non-negative integer");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config key '" + key + "': '" + value +
                                "' is not a non-negative integer");
  }
  return static_cast<std::uint64_t>(out);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("config key '" + key + "': '" + value +
                              "' is not a boolean (use true/false)");
}

std::vector<double> parse_mu_list(const std::string& key,
                                  const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const double mu = parse_double(key, item);
    if (mu < 0.0) {
      throw std::invalid_argument("config key '" + key + "': noise level " +
                                  item + " must be >= 0");
    }
    out.push_back(mu);
  }
  return out;
}

void check_unit_interval(const std::string& key, double v) {
  if (!(v > 0.0 && v < 1.0)) {
    throw std::invalid_argument("config key '" + key + "': value " +
                                io::fmt_g12(v) + " outside (0, 1)");
  }
}

std::string stop_reason_name(StopReason reason) {
  return reason == StopReason::discrepancy ? "discrepancy" : "max_iter";
}

std::string gamma_policy_label(const ExperimentConfig& config) {
  switch (config.gamma_policy) {
    case GammaPolicy::zero:
      return "zero";
    case GammaPolicy::paper_formula:
      return "paper_formula";
    case GammaPolicy::explicit_value:
      return "explicit:" + io::fmt_g12(config.gamma_value);
  }
  return "zero";
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open output file " + path.string());
  }
  return out;
}

void write_preamble(std::ofstream& out, const ExperimentConfig& config) {
  for (const auto& line : config_summary(config)) {
    out << "# " << line << "\n";
  }
}

double gamma_for(const ExperimentConfig& config, double theta) {
  switch (config.gamma_policy) {
    case GammaPolicy::zero:
      return 0.0;
    case GammaPolicy::paper_formula:
      return choose_gamma(theta);
    case GammaPolicy::explicit_value:
      return config.gamma_value;
  }
  return 0.0;
}

std::uint64_t sub_seed(std::uint64_t seed, double mu) {
  return seed * 1000u + static_cast<std::uint64_t>(std::llround(mu * 1000.0));
}

// ------------------------------------------------------------------------
// Manufactured problems for the convergence study.  psi denotes the
// stationary profile (unit右-hand-side solution); the evolving solution is
// u = (1 + t^alpha) psi ("singular", derivative blows up at t=0) or
// u = (1 + t^3) psi ("smooth control", three bounded derivatives).

Eigen::VectorXd singular_source(const Eigen::VectorXd& psi, double alpha,
                                double t) {
  const double ga = std::tgamma(1.0 + alpha);
  return Eigen::VectorXd::Constant(psi.size(), 1.0 + std::pow(t, alpha)) +
         ga * psi;
}

Eigen::VectorXd smooth_source(const Eigen::VectorXd& psi, double alpha,
                              double t) {
  const double c3 = 6.0 / std::tgamma(4.0 - alpha);
  return Eigen::VectorXd::Constant(psi.size(), 1.0 + t * t * t) +
         c3 * std::pow(t, 3.0 - alpha) * psi;
}

// Exact final-time solution of the semidiscrete (space-discretized,
// time-continuous) problem, via the generalized eigenbasis and the
// variation-of-constants formula.
Eigen::VectorXd semidiscrete_final(const NonlocalMatrices& mats,
                                   const Eigen::VectorXd& psi, double alpha,
                                   double T, bool smooth_control) {
  const int n = static_cast<int>(mats.stiffness.rows());
  const EigenBasis basis = compute_eigenbasis(mats, n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd qk = basis.vectors.transpose() * (mats.mass * psi);
  const Eigen::VectorXd pk = basis.vectors.transpose() * (mats.mass * ones);
  const double ta = std::pow(T, alpha);
  Eigen::VectorXd ck(n);
  if (!smooth_control) {
    const double ga = std::tgamma(1.0 + alpha);
    // F(t) = (1 + ga*psi) + t^alpha * 1
    const Eigen::VectorXd ak = pk + ga * qk;
    for (int k = 0; k < n; ++k) {
      const double z = -basis.lambdas[k] * ta;
      const double e1 = ml_eval({alpha, 1.0}, z);
      const double e2 = ml_eval({alpha, 1.0 + alpha}, z);
      const double e3 = ml_eval({alpha, 1.0 + 2.0 * alpha}, z);
      ck[k] = qk[k] * e1 + ak[k] * ta * e2 + pk[k] * ga * ta * ta * e3;
    }
  } else {
    // F(t) = 1 + t^3 * 1 + (6/Gamma(4-alpha)) t^{3-alpha} * psi
    const double t3 = T * T * T;
    for (int k = 0; k < n; ++k) {
      const double z = -basis.lambdas[k] * ta;
      const double e1 = ml_eval({alpha, 1.0}, z);
      const double e2 = ml_eval({alpha, 1.0 + alpha}, z);
      const double e4 = ml_eval({alpha, 4.0}, z);
      const double e4a = ml_eval({alpha, 4.0 + alpha}, z);
      ck[k] = qk[k] * e1 + pk[k] * (ta * e2 + 6.0 * t3 * ta * e4a) +
              6.0 * qk[k] * t3 * e4;
    }
  }
  return basis.vectors * ck;
}

void finish_sweep(SweepResult& sweep) {
  sweep.pairwise.assign(sweep.errors.size(), kNan);
  sweep.monotone = true;
  for (std::size_t i = 1; i < sweep.errors.size(); ++i) {
    sweep.pairwise[i] = std::log2(sweep.errors[i - 1] / sweep.errors[i]);
    if (!(sweep.errors[i] < sweep.errors[i - 1])) sweep.monotone = false;
  }
  sweep.slope = sweep.errors.size() >= 2
                    ? fit_loglog_slope(sweep.steps, sweep.errors)
                    : kNan;
}

SweepResult temporal_sweep(const ExperimentConfig& config,
                           bool smooth_control) {
  SweepResult sweep;
  sweep.sweep = smooth_control ? "temporal_smooth" : "temporal";
  sweep.problem = smooth_control ? "u=(1+t^3)*psi" : "u=(1+t^alpha)*psi";
  sweep.alpha = config.alpha;
  sweep.s = config.s;
  sweep.theoretical_rate = 2.0 - config.alpha;

  const Mesh1D mesh = make_mesh(config.N);
  const NonlocalMatrices mats = assemble_stiffness(mesh, config.s);
  const Eigen::VectorXd psi = stationary_profile(mesh, config.s);
  const Eigen::VectorXd ref =
      semidiscrete_final(mats, psi, config.alpha, config.T, smooth_control);
  const double amp = smooth_control
                         ? 1.0 + config.T * config.T * config.T
                         : 1.0 + std::pow(config.T, config.alpha);
  const Eigen::VectorXd exact = amp * psi;

  for (const int k_steps : {50, 100, 200, 400}) {
    try {
      const TimeGrid grid = make_time_grid(k_steps, config.T, config.alpha);
      const L1Marcher marcher(mesh, mats, grid);
      const double alpha = config.alpha;
      const SourceFn source =
          smooth_control
              ? SourceFn([&psi, alpha](double t) {
                  return smooth_source(psi, alpha, t);
                })
              : SourceFn([&psi, alpha](double t) {
                  return singular_source(psi, alpha, t);
                });
      const SpaceTimeField field = marcher.solve_forward(psi, source);
      const Eigen::VectorXd u_final =
          field.values.row(grid.n_steps).transpose();
      sweep.steps.push_back(grid.dt);
      sweep.errors.push_back(l2_norm(mats, u_final - ref));
      sweep.errors_exact.push_back(l2_norm(mats, u_final - exact));
    } catch (const std::exception& e) {
      sweep.row_errors.push_back("K=" + std::to_string(k_steps) + ": " +
                                 e.what());
    }
  }
  finish_sweep(sweep);
  return sweep;
}

SweepResult spatial_sweep(const ExperimentConfig& config, int k_steps) {
  SweepResult sweep;
  sweep.sweep = "spatial_k" + std::to_string(k_steps);
  sweep.problem = "u=(1+t^alpha)*psi";
  sweep.alpha = config.alpha;
  sweep.s = config.s;
  sweep.theoretical_rate = std::min(config.s + 0.5, 1.0);

  for (const int n : {100, 200, 400, 800}) {
    try {
      const Mesh1D mesh = make_mesh(n);
      const NonlocalMatrices mats = assemble_stiffness(mesh, config.s);
      const Eigen::VectorXd psi = stationary_profile(mesh, config.s);
      const TimeGrid grid = make_time_grid(k_steps, config.T, config.alpha);
      const L1Marcher marcher(mesh, mats, grid);
      const double alpha = config.alpha;
      const SourceFn source = [&psi, alpha](double t) {
        return singular_source(psi, alpha, t);
      };
      const SpaceTimeField field = marcher.solve_forward(psi, source);
      const Eigen::VectorXd u_final =
          field.values.row(grid.n_steps).transpose();
      const Eigen::VectorXd exact =
          (1.0 + std::pow(config.T, config.alpha)) * psi;
      sweep.steps.push_back(mesh.dx);
      const double err = l2_norm(mats, u_final - exact);
      sweep.errors.push_back(err);
      sweep.errors_exact.push_back(err);
    } catch (const std::exception& e) {
      sweep.row_errors.push_back("N=" + std::to_string(n) + ": " + e.what());
    }
  }
  finish_sweep(sweep);
  return sweep;
}

std::vector<double> default_mu_list(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::example_5_1:
      return {0.0};
    case ExperimentKind::example_5_2:
      return {0.001, 0.005, 0.01, 0.05, 0.1, 0.15};
    case ExperimentKind::example_5_3:
    case ExperimentKind::example_5_4:
      return {0.005, 0.01, 0.05, 0.1};
    default:
      return {};
  }
}

std::vector<WindowStat> window_stats(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& diff, double dx) {
  std::vector<WindowStat> out;
  for (const double center : {-0.75, -0.25, 0.25, 0.75}) {
    WindowStat w;
    w.center = center;
    w.width = 0.1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x[i] - center) <= 0.05) {
        acc += dx * diff[i] * diff[i];
      }
    }
    w.local_error = std::sqrt(acc);
    out.push_back(w);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// targets and names

Eigen::VectorXd sample_target(const TargetFunction& target, const Mesh1D& mesh,
                              double s) {
  const Eigen::VectorXd x = mesh.interior_coords();
  Eigen::VectorXd g(x.size());
  switch (target.kind) {
    case TargetKind::trig:
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        g[i] = std::cos(kPi * x[i]) * std::sin(kPi * x[i]);
      }
      return g;
    case TargetKind::smooth:
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        g[i] = std::sin(kPi * x[i]) * std::exp(-x[i] * x[i]) -
               std::cos(kPi * x[i]) * std::exp(x[i] * x[i]);
      }
      return g;
    case TargetKind::nonsmooth:
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double ax = std::abs(x[i]);
        g[i] = ax > 0.75 ? 0.5 : (ax > 0.25 ? 1.0 : 2.0);
      }
      return g;
    case TargetKind::manufactured:
      return stationary_profile(mesh, s);
    case TargetKind::custom:
      if (target.samples.size() != mesh.n_interior()) {
        throw std::invalid_argument(
            "custom target has " + std::to_string(target.samples.size()) +
            " samples, expected " + std::to_string(mesh.n_interior()));
      }
      return target.samples;
  }
  throw std::logic_error("sample_target: unknown target kind");
}

TargetFunction default_target(ExperimentKind kind) {
  TargetFunction target;
  switch (kind) {
    case ExperimentKind::example_5_3:
      target.kind = TargetKind::smooth;
      break;
    case ExperimentKind::example_5_4:
      target.kind = TargetKind::nonsmooth;
      break;
    case ExperimentKind::convergence_table:
    case ExperimentKind::illposedness:
      target.kind = TargetKind::manufactured;
      break;
    default:
      target.kind = TargetKind::trig;
      break;
  }
  return target;
}

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::convergence_table:
      return "convergence_table";
    case ExperimentKind::example_5_1:
      return "example_5_1";
    case ExperimentKind::example_5_2:
      return "example_5_2";
    case ExperimentKind::example_5_3:
      return "example_5_3";
    case ExperimentKind::example_5_4:
      return "example_5_4";
    case ExperimentKind::illposedness:
      return "illposedness";
  }
  throw std::logic_error("experiment_name: unknown kind");
}

ExperimentKind experiment_from_name(const std::string& name) {
  for (const auto kind :
       {ExperimentKind::convergence_table, ExperimentKind::example_5_1,
        ExperimentKind::example_5_2, ExperimentKind::example_5_3,
        ExperimentKind::example_5_4, ExperimentKind::illposedness}) {
    if (experiment_name(kind) == name) return kind;
  }
  throw std::invalid_argument(
      "unknown experiment '" + name +
      "' (valid: convergence_table, example_5_1, example_5_2, example_5_3, "
      "example_5_4, illposedness)");
}

std::string target_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::trig:
      return "trig";
    case TargetKind::smooth:
      return "smooth";
    case TargetKind::nonsmooth:
      return "nonsmooth";
    case TargetKind::manufactured:
      return "manufactured";
    case TargetKind::custom:
      return "custom";
  }
  throw std::logic_error("target_name: unknown kind");
}

// ---------------------------------------------------------------------------
// configuration

void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
  if (key == "experiment") {
    config.experiment = experiment_from_name(value);
  } else if (key == "alpha") {
    const double v = parse_double(key, value);
    check_unit_interval(key, v);
    config.alpha = v;
  } else if (key == "s") {
    const double v = parse_double(key, value);
    check_unit_interval(key, v);
    config.s = v;
  } else if (key == "N") {
    const long long v = parse_ll(key, value);
    if (v < 4) {
      throw std::invalid_argument("config key 'N': value " + value +
                                  " is too coarse (need at least 4)");
    }
    config.N = static_cast<int>(v);
  } else if (key == "K") {
    const long long v = parse_ll(key, value);
    if (v < 2) {
      throw std::invalid_argument("config key 'K': value " + value +
                                  " is too coarse (need at least 2)");
    }
    config.K = static_cast<int>(v);
  } else if (key == "T") {
    const double v = parse_double(key, value);
    if (!(v > 0.0)) {
      throw std::invalid_argument("config key 'T': horizon must be positive");
    }
    config.T = v;
  } else if (key == "mu_list") {
    config.mu_list = parse_mu_list(key, value);
  } else if (key == "seed") {
    config.seed = parse_u64(key, value);
  } else if (key == "gamma_policy") {
    if (value == "zero") {
      config.gamma_policy = GammaPolicy::zero;
    } else if (value == "paper_formula" || value == "paper") {
      config.gamma_policy = GammaPolicy::paper_formula;
    } else {
      const double v = parse_double(key, value);
      if (v < 0.0) {
        throw std::invalid_argument(
            "config key 'gamma_policy': explicit weight must be >= 0");
      }
      config.gamma_policy = GammaPolicy::explicit_value;
      config.gamma_value = v;
    }
  } else if (key == "gamma_value") {
    const double v = parse_double(key, value);
    if (v < 0.0) {
      throw std::invalid_argument(
          "config key 'gamma_value': weight must be >= 0");
    }
    config.gamma_policy = GammaPolicy::explicit_value;
    config.gamma_value = v;
  } else if (key == "output_dir") {
    if (value.empty()) {
      throw std::invalid_argument("config key 'output_dir': empty path");
    }
    config.output_dir = value;
  } else if (key == "sigma") {
    const double v = parse_double(key, value);
    if (!(v >= 1.0)) {
      throw std::invalid_argument(
          "config key 'sigma': discrepancy factor must be >= 1");
    }
    config.sigma = v;
  } else if (key == "eta") {
    const double v = parse_double(key, value);
    if (!(v > 0.0)) {
      throw std::invalid_argument("config key 'eta': width must be positive");
    }
    config.eta = v;
  } else if (key == "max_iter") {
    const long long v = parse_ll(key, value);
    if (v < 0) {
      throw std::invalid_argument("config key 'max_iter': must be >= 0");
    }
    config.max_iter = static_cast<int>(v);
  } else if (key == "theta_override") {
    const double v = parse_double(key, value);
    if (v < 0.0) {
      throw std::invalid_argument("config key 'theta_override': must be >= 0");
    }
    config.theta_override = v;
  } else if (key == "dump_matrices") {
    config.dump_matrices = parse_bool(key, value);
  } else if (key == "dump_trajectory") {
    config.dump_trajectory = parse_bool(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file " + path);
  }
  ExperimentConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config file " + path + " line " +
                                  std::to_string(lineno) +
                                  ": expected key=value");
    }
    apply_config_entry(config, trim(line.substr(0, eq)),
                       trim(line.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig parse_config(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  ExperimentConfig config;
  for (const auto& [key, value] : entries) {
    apply_config_entry(config, key, value);
  }
  return config;
}

std::vector<std::string> config_summary(const ExperimentConfig& config) {
  std::vector<std::string> lines;
  lines.push_back("experiment=" + experiment_name(config.experiment));
  lines.push_back("alpha=" + io::fmt_g12(config.alpha));
  lines.push_back("s=" + io::fmt_g12(config.s));
  lines.push_back("N=" + std::to_string(config.N));
  lines.push_back("K=" + std::to_string(config.K));
  lines.push_back("T=" + io::fmt_g12(config.T));
  std::string mus;
  const std::vector<double> effective_mus = config.mu_list.empty()
                                                ? default_mu_list(config.experiment)
                                                : config.mu_list;
  for (std::size_t i = 0; i < effective_mus.size(); ++i) {
    if (i) mus += ",";
    mus += io::fmt_g12(effective_mus[i]);
  }
  lines.push_back("mu_list=" + mus);
  lines.push_back("seed=" + std::to_string(config.seed));
  lines.push_back("gamma_policy=" + gamma_policy_label(config));
  lines.push_back("sigma=" + io::fmt_g12(config.sigma));
  lines.push_back("eta=" + io::fmt_g12(config.eta));
  lines.push_back("max_iter=" + std::to_string(config.max_iter));
  lines.push_back("theta_override=" +
                  (config.theta_override.has_value()
                       ? io::fmt_g12(*config.theta_override)
                       : std::string("none")));
  return lines;
}

std::string config_hash(const ExperimentConfig& config) {
  std::string joined;
  for (const auto& line : config_summary(config)) {
    joined += line;
    joined += '\n';
  }
  return io::fnv1a64_hex(joined);
}

// ---------------------------------------------------------------------------
// convergence study

double fit_loglog_slope(const std::vector<double>& steps,
                        const std::vector<double>& errors) {
  if (steps.size() != errors.size() || steps.size() < 2) {
    throw std::invalid_argument(
        "fit_loglog_slope: need at least two (step, error) pairs");
  }
  const std::size_t n = steps.size();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(steps[i] > 0.0) || !(errors[i] > 0.0)) {
      throw std::invalid_argument(
          "fit_loglog_slope: steps and errors must be positive");
    }
    mx += std::log(steps[i]);
    my += std::log(errors[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(steps[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(errors[i]) - my);
  }
  if (sxx == 0.0) {
    throw std::invalid_argument("fit_loglog_slope: all steps are equal");
  }
  return sxy / sxx;
}

ConvergenceTable run_convergence_table(const ExperimentConfig& config) {
  // Self-test of the rate fit on synthetic data before any real sweep.
  {
    const std::vector<double> st{0.02, 0.01, 0.005, 0.0025};
    std::vector<double> er;
    er.reserve(st.size());
    for (const double h : st) er.push_back(3.7 * std::pow(h, 1.37));
    if (std::abs(fit_loglog_slope(st, er) - 1.37) > 1e-6) {
      throw std::logic_error("convergence table: slope fit self-test failed");
    }
  }
  ConvergenceTable table;
  table.sweeps.push_back(temporal_sweep(config, /*smooth_control=*/false));
  table.sweeps.push_back(temporal_sweep(config, /*smooth_control=*/true));
  table.sweeps.push_back(spatial_sweep(config, config.K));
  if (config.K != 400) {
    table.sweeps.push_back(spatial_sweep(config, 400));
  }
  return table;
}

// ---------------------------------------------------------------------------
// reconstruction experiments

ReconstructionResult run_reconstruction(const ExperimentConfig& config,
                                        const TargetFunction& target) {
  ForwardContext ctx = make_forward_context(config.alpha, config.s, config.N,
                                            config.K, config.T);
  ReconstructionResult result;
  result.x = ctx.mesh.interior_coords();
  result.g_exact = sample_target(target, ctx.mesh, config.s);
  result.h_exact = ctx.apply_forward(result.g_exact);

  const std::vector<double> mus = config.mu_list.empty()
                                      ? default_mu_list(config.experiment)
                                      : config.mu_list;
  for (const double mu : mus) {
    ReconstructionMuResult r;
    r.mu = mu;
    try {
      NoiseSpec spec;
      spec.mu = mu;
      spec.seed = sub_seed(config.seed, mu);
      auto [h_noisy, theta] = add_noise(result.h_exact, spec, ctx.matrices);
      r.theta = theta;
      r.gamma = gamma_for(config, theta);

      CgmConfig cgm;
      cgm.gamma = r.gamma;
      cgm.sigma = config.sigma;
      cgm.max_iter = config.max_iter;
      cgm.eta = config.eta;
      cgm.theta_override = config.theta_override;
      auto [g_final, trace] = run_cgm(h_noisy, theta, cgm, ctx, &result.g_exact);

      r.g_final = g_final;
      r.trace = trace;
      r.stopping_index = trace.stopping_index;
      r.stop_reason = trace.stop_reason;
      r.final_error = trace.iterations.back().error;

      const double theta_eff = config.theta_override.value_or(theta);
      const double level = config.sigma * theta_eff;
      r.bracket_ok = true;
      if (trace.stop_reason == StopReason::discrepancy) {
        const auto& rows = trace.iterations;
        const int is = trace.stopping_index;
        r.bracket_ok = rows[static_cast<std::size_t>(is)].residual <= level &&
                       (is == 0 ||
                        rows[static_cast<std::size_t>(is - 1)].residual > level);
      }

      const Eigen::VectorXd diff = g_final - result.g_exact;
      r.global_l2 = std::sqrt(ctx.mesh.dx * diff.squaredNorm());
      if (config.experiment == ExperimentKind::example_5_4) {
        r.windows = window_stats(result.x, diff, ctx.mesh.dx);
      }
    } catch (const std::exception& e) {
      r.error_message = e.what();
    }
    result.per_mu.push_back(std::move(r));
  }
  return result;
}

// ---------------------------------------------------------------------------
// regularization comparison

RegularizationTable run_regularization_comparison(
    const ExperimentConfig& config) {
  ForwardContext ctx = make_forward_context(config.alpha, config.s, config.N,
                                            config.K, config.T);
  TargetFunction target;
  target.kind = TargetKind::trig;
  const Eigen::VectorXd g_exact = sample_target(target, ctx.mesh, config.s);
  const Eigen::VectorXd h_exact = ctx.apply_forward(g_exact);
  const double exact_norm = l2_norm(ctx.matrices, g_exact);

  const std::vector<double> mus = config.mu_list.empty()
                                      ? default_mu_list(config.experiment)
                                      : config.mu_list;
  RegularizationTable table;
  for (const double mu : mus) {
    NoiseSpec spec;
    spec.mu = mu;
    spec.seed = sub_seed(config.seed, mu);
    auto [h_noisy, theta] = add_noise(h_exact, spec, ctx.matrices);

    // Fixed iteration count for a like-for-like comparison of the two
    // regularization policies: theta = 0 disables the discrepancy test.
    auto run_with_gamma = [&](double gamma) {
      CgmConfig cgm;
      cgm.gamma = gamma;
      cgm.sigma = config.sigma;
      cgm.max_iter = config.max_iter;
      cgm.eta = config.eta;
      return run_cgm(h_noisy, 0.0, cgm, ctx, &g_exact);
    };
    auto [g_zero, trace_zero] = run_with_gamma(0.0);
    const double gamma_formula = choose_gamma(theta);
    auto [g_formula, trace_formula] = run_with_gamma(gamma_formula);

    RegularizationRow row;
    row.mu = mu;
    row.theta = theta;
    row.gamma_formula = gamma_formula;
    row.err_zero = trace_zero.iterations.back().error;
    row.err_formula = trace_formula.iterations.back().error;
    row.output_gap = l2_norm(ctx.matrices, g_formula - g_zero);
    row.exact_norm = exact_norm;
    if (mu <= 0.01) {
      table.light.push_back(row);
    } else {
      table.heavy.push_back(row);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// ill-posedness demo

IllposednessResult run_illposedness(const ExperimentConfig& config) {
  const Mesh1D mesh = make_mesh(config.N);
  const NonlocalMatrices mats = assemble_stiffness(mesh, config.s);
  const int p_max = mesh.n_interior();
  const EigenBasis basis = compute_eigenbasis(mats, p_max);
  IllposednessResult result;
  result.rows = illposedness_demo(basis, config.alpha, config.T, p_max);
  result.max_amplification = 0.0;
  for (const auto& row : result.rows) {
    if (row.amplification > result.max_amplification) {
      result.max_amplification = row.amplification;
      result.argmax_p = row.p;
    }
  }
  result.exceeds_1e3 = result.max_amplification > 1e3;
  std::ostringstream os;
  os << "max amplification " << io::fmt_g12(result.max_amplification)
     << " at mode p=" << result.argmax_p << " of " << p_max << " (N="
     << config.N << ", s=" << io::fmt_g12(config.s) << ", alpha="
     << io::fmt_g12(config.alpha) << ", T=" << io::fmt_g12(config.T) << "): "
     << (result.exceeds_1e3 ? "exceeds" : "does NOT exceed") << " 1e3";
  result.verdict = os.str();
  return result;
}

// ---------------------------------------------------------------------------
// driver

namespace {

void write_convergence_files(const ConvergenceTable& table,
                             const ExperimentConfig& config,
                             const fs::path& dir) {
  {
    auto out = open_csv(dir / "convergence_rows.csv");
    write_preamble(out, config);
    out << "sweep,problem,alpha,s,step,error,error_exact,order_vs_prev\n";
    for (const auto& sweep : table.sweeps) {
      for (std::size_t i = 0; i < sweep.steps.size(); ++i) {
        out << sweep.sweep << "," << sweep.problem << ","
            << io::fmt_g12(sweep.alpha) << "," << io::fmt_g12(sweep.s) << ","
            << io::fmt_g12(sweep.steps[i]) << ","
            << io::fmt_g12(sweep.errors[i]) << ","
            << io::fmt_g12(sweep.errors_exact[i]) << ","
            << io::fmt_g12(sweep.pairwise[i]) << "\n";
      }
    }
  }
  {
    auto out = open_csv(dir / "convergence_summary.csv");
    write_preamble(out, config);
    out << "sweep,problem,alpha,s,slope,theoretical_rate,monotone,notes\n";
    for (const auto& sweep : table.sweeps) {
      std::string notes;
      for (const auto& err : sweep.row_errors) {
        if (!notes.empty()) notes += "; ";
        notes += err;
      }
      out << sweep.sweep << "," << sweep.problem << ","
          << io::fmt_g12(sweep.alpha) << "," << io::fmt_g12(sweep.s) << ","
          << io::fmt_g12(sweep.slope) << ","
          << io::fmt_g12(sweep.theoretical_rate) << ","
          << (sweep.monotone ? 1 : 0) << "," << notes << "\n";
    }
  }
}

void write_reconstruction_files(const ReconstructionResult& result,
                                const ExperimentConfig& config,
                                const fs::path& dir) {
  {
    auto out = open_csv(dir / "target.csv");
    write_preamble(out, config);
    out << "x, g_value\n";
    for (Eigen::Index i = 0; i < result.x.size(); ++i) {
      out << io::fmt_g12(result.x[i]) << ", "
          << io::fmt_g12(result.g_exact[i]) << "\n";
    }
  }
  for (const auto& r : result.per_mu) {
    const std::string tag = "mu" + io::fmt_g12(r.mu);
    if (r.error_message.empty()) {
      auto out = open_csv(dir / ("reconstruction_" + tag + ".csv"));
      write_preamble(out, config);
      out << "x, g_value\n";
      for (Eigen::Index i = 0; i < result.x.size(); ++i) {
        out << io::fmt_g12(result.x[i]) << ", " << io::fmt_g12(r.g_final[i])
            << "\n";
      }
      std::vector<std::string> preamble = config_summary(config);
      preamble.push_back("mu=" + io::fmt_g12(r.mu));
      preamble.push_back("theta=" + io::fmt_g12(r.theta));
      preamble.push_back("gamma=" + io::fmt_g12(r.gamma));
      write_trace_csv(r.trace, (dir / ("trace_" + tag + ".csv")).string(),
                      preamble);
    }
  }
  {
    auto out = open_csv(dir / "summary.csv");
    write_preamble(out, config);
    out << "mu,theta,gamma,stopping_index,stop_reason,final_error,global_l2,"
           "bracket_ok,note\n";
    for (const auto& r : result.per_mu) {
      if (!r.error_message.empty()) {
        out << io::fmt_g12(r.mu) << ",,,,,,,," << r.error_message << "\n";
        continue;
      }
      out << io::fmt_g12(r.mu) << "," << io::fmt_g12(r.theta) << ","
          << io::fmt_g12(r.gamma) << "," << r.stopping_index << ","
          << stop_reason_name(r.stop_reason) << ","
          << io::fmt_g12(r.final_error) << "," << io::fmt_g12(r.global_l2)
          << "," << (r.bracket_ok ? 1 : 0) << ",\n";
    }
  }
  if (config.experiment == ExperimentKind::example_5_4) {
    auto out = open_csv(dir / "windows.csv");
    write_preamble(out, config);
    out << "mu,center,width,local_error,global_l2\n";
    for (const auto& r : result.per_mu) {
      for (const auto& w : r.windows) {
        out << io::fmt_g12(r.mu) << "," << io::fmt_g12(w.center) << ","
            << io::fmt_g12(w.width) << "," << io::fmt_g12(w.local_error)
            << "," << io::fmt_g12(r.global_l2) << "\n";
      }
    }
  }
}

void write_regularization_files(const RegularizationTable& table,
                                const ExperimentConfig& config,
                                const fs::path& dir) {
  auto out = open_csv(dir / "regularization.csv");
  write_preamble(out, config);
  out << "block,mu,theta,gamma_formula,err_zero,err_formula,output_gap,"
         "exact_norm\n";
  auto emit = [&](const char* block, const std::vector<RegularizationRow>& rows) {
    for (const auto& row : rows) {
      out << block << "," << io::fmt_g12(row.mu) << ","
          << io::fmt_g12(row.theta) << "," << io::fmt_g12(row.gamma_formula)
          << "," << io::fmt_g12(row.err_zero) << ","
          << io::fmt_g12(row.err_formula) << ","
          << io::fmt_g12(row.output_gap) << "," << io::fmt_g12(row.exact_norm)
          << "\n";
    }
  };
  emit("light", table.light);
  emit("heavy", table.heavy);
}

void write_illposedness_files(const IllposednessResult& result,
                              const ExperimentConfig& config,
                              const fs::path& dir) {
  auto out = open_csv(dir / "illposedness.csv");
  write_preamble(out, config);
  out << "p, lambda_p, data_gap, solution_gap, amplification\n";
  for (const auto& row : result.rows) {
    out << row.p << ", " << io::fmt_g12(row.lambda_p) << ", "
        << io::fmt_g12(row.data_gap) << ", " << io::fmt_g12(row.solution_gap)
        << ", " << io::fmt_g12(row.amplification) << "\n";
  }
}

}  // namespace

int run_experiment(const ExperimentConfig& config) {
  try {
    const fs::path dir = fs::path(config.output_dir) /
                         experiment_name(config.experiment) /
                         config_hash(config);
    fs::create_directories(dir);

    if (config.dump_matrices) {
      const Mesh1D mesh = make_mesh(config.N);
      const NonlocalMatrices mats = assemble_stiffness(mesh, config.s);
      dump_matrix_csv(mats.stiffness, (dir / "stiffness.csv").string());
      dump_matrix_csv(mats.mass, (dir / "mass.csv").string());
    }

    switch (config.experiment) {
      case ExperimentKind::convergence_table: {
        const ConvergenceTable table = run_convergence_table(config);
        write_convergence_files(table, config, dir);
        for (const auto& sweep : table.sweeps) {
          std::cout << "convergence " << sweep.sweep << " (alpha="
                    << io::fmt_g12(sweep.alpha) << ", s="
                    << io::fmt_g12(sweep.s) << "): slope "
                    << io::fmt_g12(sweep.slope) << " (theory "
                    << io::fmt_g12(sweep.theoretical_rate) << ")"
                    << (sweep.monotone ? "" : " [non-monotone refinement]")
                    << "\n";
          for (const auto& err : sweep.row_errors) {
            std::cout << "  row failed: " << err << "\n";
          }
        }
        break;
      }
      case ExperimentKind::example_5_1:
      case ExperimentKind::example_5_3:
      case ExperimentKind::example_5_4: {
        const TargetFunction target = default_target(config.experiment);
        const ReconstructionResult result = run_reconstruction(config, target);
        write_reconstruction_files(result, config, dir);
        if (config.dump_trajectory) {
          ForwardContext ctx = make_forward_context(
              config.alpha, config.s, config.N, config.K, config.T);
          dump_trajectory_csv(ctx.marcher->solve_forward(result.g_exact),
                              (dir / "trajectory.csv").string());
        }
        for (const auto& r : result.per_mu) {
          if (!r.error_message.empty()) {
            std::cout << "mu=" << io::fmt_g12(r.mu)
                      << ": failed: " << r.error_message << "\n";
            continue;
          }
          std::cout << "mu=" << io::fmt_g12(r.mu) << ": theta="
                    << io::fmt_g12(r.theta) << " gamma=" << io::fmt_g12(r.gamma)
                    << " stop=" << stop_reason_name(r.stop_reason) << " at k="
                    << r.stopping_index << " error="
                    << io::fmt_g12(r.final_error)
                    << (r.bracket_ok ? "" : " [bracket violated]") << "\n";
        }
        break;
      }
      case ExperimentKind::example_5_2: {
        const RegularizationTable table =
            run_regularization_comparison(config);
        write_regularization_files(table, config, dir);
        auto report = [](const char* block,
                         const std::vector<RegularizationRow>& rows) {
          for (const auto& row : rows) {
            std::cout << block << " mu=" << io::fmt_g12(row.mu)
                      << ": err(gamma=0)=" << io::fmt_g12(row.err_zero)
                      << " err(formula)=" << io::fmt_g12(row.err_formula)
                      << " output_gap=" << io::fmt_g12(row.output_gap) << "\n";
          }
        };
        report("light", table.light);
        report("heavy", table.heavy);
        break;
      }
      case ExperimentKind::illposedness: {
        const IllposednessResult result = run_illposedness(config);
        write_illposedness_files(result, config, dir);
        std::cout << result.verdict << "\n";
        break;
      }
    }
    std::cout << "output: " << dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace fracdiff
