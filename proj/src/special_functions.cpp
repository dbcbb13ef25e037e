#include "fracdiff/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace fracdiff {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_nonpositive_integer(double x) {
  return x <= 0.0 && x == std::floor(x);
}

// 1/Gamma(x), with the poles mapped to exact zeros.
double recip_gamma(double x) {
  if (is_nonpositive_integer(x)) return 0.0;
  return 1.0 / std::tgamma(x);
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::domain_error("ml_eval: " + msg);
}

// Kahan-compensated Taylor sum of E_{a,b}(z). Terminates when the current
// term drops below 1e-17 of the accumulated value; 1/Gamma underflows to 0
// once a*k+b passes ~171, so termination is guaranteed for a bounded away
// from zero. max_terms is a hard safety cap.
double ml_taylor(double a, double b, double z, int max_terms = 100000) {
  double acc = recip_gamma(b);
  double comp = 0.0;
  double zk = 1.0;
  for (int k = 1; k < max_terms; ++k) {
    zk *= z;
    const double term = zk * recip_gamma(a * k + b);
    const double y = term - comp;
    const double t = acc + y;
    comp = (t - acc) - y;
    acc = t;
    if (k > 2 && std::abs(term) <= 1e-17 * std::abs(acc)) return acc;
  }
  std::ostringstream os;
  os << "ml_eval: Taylor series did not converge within " << max_terms
     << " terms at alpha=" << a << " beta=" << b << " z=" << z;
  throw std::range_error(os.str());
}

// Real-axis integral representation of E_{a,b}(z) for 0 < a < 1,
// 0 < b <= 1, z < -1: the spectral-function form
//   E_{a,b}(z) = int_0^inf K(r) dr,
//   K(r) = (1/(a pi)) r^{(1-b)/a} e^{-r^{1/a}}
//          [r sin(pi(1-b)) - z sin(pi(1-b+a))] / (r^2 - 2 r z cos(a pi) + z^2).
// The integrand decays like exp(-r^{1/a}); the domain is cut at
// rmax = 42^a + 5 (exp(-42) ~ 6e-19) and split at the Lorentzian peak
// r ~ |z cos(a pi)| so the adaptive rule sees it.
double ml_integral_neg(double a, double b, double z) {
  const double api = a * kPi;
  const double s1 = std::sin(kPi * (1.0 - b));
  const double s2 = std::sin(kPi * (1.0 - b + a));
  const double ca = std::cos(api);
  const double inv_a = 1.0 / a;
  const double pow_exp = (1.0 - b) * inv_a;
  const bool b_is_one = (b == 1.0);
  const auto kernel = [&](double r) {
    const double num = r * s1 - z * s2;
    const double den = r * r - 2.0 * r * z * ca + z * z;
    const double rpow = b_is_one ? 1.0 : std::pow(r, pow_exp);
    return (1.0 / api) * rpow * std::exp(-std::pow(r, inv_a)) * num / den;
  };

  const double rmax = std::pow(42.0, a) + 5.0;
  std::vector<double> pts{0.0, rmax};
  const double cand[3] = {1.0, std::min(std::abs(z * ca), rmax * 0.999),
                          rmax * 0.5};
  for (double p : cand) {
    if (p > 0.0 && p < rmax) pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double err = 0.0;
    const double piece =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            kernel, pts[i], pts[i + 1], 12, 1e-14, &err);
    if (!std::isfinite(piece)) {
      std::ostringstream os;
      os << "ml_eval: integral branch returned a non-finite piece on ["
         << pts[i] << ", " << pts[i + 1] << "] at alpha=" << a
         << " beta=" << b << " z=" << z;
      throw std::range_error(os.str());
    }
    total += piece;
  }
  return total;
}

}  // namespace

namespace detail {

double ml_series_branch(const MlParams& params, double z) {
  return ml_taylor(params.alpha, params.beta, z);
}

double ml_negative_branch(const MlParams& params, double z) {
  if (!(z < -1.0)) {
    throw std::domain_error("ml_negative_branch: requires z < -1");
  }
  int nred = 0;
  double bb = params.beta;
  while (bb > 1.0) {
    bb -= params.alpha;
    ++nred;
  }
  double v = ml_integral_neg(params.alpha, bb, z);
  for (int i = 0; i < nred; ++i) {
    v = (v - recip_gamma(bb)) / z;
    bb += params.alpha;
  }
  return v;
}

}  // namespace detail

double gamma_eval(double x) {
  if (!std::isfinite(x)) {
    throw std::domain_error("gamma_eval: argument must be finite");
  }
  if (is_nonpositive_integer(x)) {
    std::ostringstream os;
    os << "gamma_eval: pole at non-positive integer x=" << x;
    throw std::domain_error(os.str());
  }
  return std::tgamma(x);
}

double ml_eval(const MlParams& params, double z) {
  const double a = params.alpha;
  const double b = params.beta;
  if (!std::isfinite(a) || !(a > 0.0)) {
    fail("alpha must be a finite real > 0");
  }
  if (!std::isfinite(b)) fail("beta must be finite");
  if (!std::isfinite(z)) fail("z must be finite");
  if (a > 1.0) {
    std::ostringstream os;
    os << "certified range is alpha in (0,1]; got alpha=" << a;
    fail(os.str());
  }

  if (a == 1.0) {
    if (b == 1.0) return std::exp(z);
    if (b == 2.0) return z == 0.0 ? 1.0 : std::expm1(z) / z;
    if (std::abs(z) <= 1.0) return ml_taylor(a, b, z);
    if (z > 1.0) return ml_taylor(a, b, z);
    std::ostringstream os;
    os << "alpha=1 with z < -1 is certified only for beta in {1,2}; got beta="
       << b;
    fail(os.str());
  }

  if (std::abs(z) <= 1.0) return ml_taylor(a, b, z);

  if (z < 0.0) {
    if (z < -1e9) {
      std::ostringstream os;
      os << "certified negative range is z >= -1e9; got z=" << z;
      throw std::range_error("ml_eval: " + os.str());
    }
    // Reduce beta into (0,1] and run the three-term recurrence upward.
    int nred = 0;
    double bb = b;
    while (bb > 1.0) {
      bb -= a;
      ++nred;
    }
    if (!(bb > 0.0)) {
      std::ostringstream os;
      os << "z < -1 requires beta reducible into (0,1] by steps of alpha; "
            "beta="
         << b << " reduces to " << bb;
      fail(os.str());
    }
    double v = ml_integral_neg(a, bb, z);
    for (int i = 0; i < nred; ++i) {
      v = (v - recip_gamma(bb)) / z;
      bb += a;
    }
    return v;
  }

  // z > 1: the series still converges absolutely; guard against overflow of
  // the value itself, which grows like exp(z^{1/a}).
  if (std::pow(z, 1.0 / a) > 700.0) {
    std::ostringstream os;
    os << "ml_eval: certified positive range is z^(1/alpha) <= 700 (value "
          "overflows double); got z="
       << z << " at alpha=" << a;
    throw std::range_error(os.str());
  }
  return ml_taylor(a, b, z);
}

double ml_caputo_identity_residual(const MlParams& params, double lambda,
                                   double t, std::size_t n_samples) {
  if (params.beta != 1.0) {
    throw std::invalid_argument(
        "ml_caputo_identity_residual: requires beta == 1");
  }
  if (!(lambda > 0.0)) {
    throw std::domain_error("ml_caputo_identity_residual: lambda must be > 0");
  }
  if (!(t > 0.0)) {
    throw std::domain_error("ml_caputo_identity_residual: t must be > 0");
  }
  if (n_samples < 4) {
    throw std::invalid_argument(
        "ml_caputo_identity_residual: need at least 4 samples");
  }
  const double a = params.alpha;
  const std::size_t n = n_samples;
  const double dt = t / static_cast<double>(n);
  const auto u_at = [&](double tt) {
    return ml_eval(params, -lambda * std::pow(tt, a));
  };
  const double u_t = u_at(t);

  if (a == 1.0) {
    // L1 weights degenerate at alpha = 1; use a centered difference of the
    // sampled (exponential) solution at the same resolution instead.
    const double deriv = (u_at(t + dt) - u_at(t - dt)) / (2.0 * dt);
    return std::abs(deriv + lambda * u_t);
  }

  std::vector<double> u(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    u[i] = u_at(static_cast<double>(i) * dt);
  }
  const double beta0 = std::pow(dt, -a) / std::tgamma(2.0 - a);
  double acc = 0.0;
  double comp = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double bj = std::pow(static_cast<double>(j + 1), 1.0 - a) -
                      std::pow(static_cast<double>(j), 1.0 - a);
    const double term = bj * (u[n - j] - u[n - j - 1]);
    const double y = term - comp;
    const double s = acc + y;
    comp = (s - acc) - y;
    acc = s;
  }
  return std::abs(beta0 * acc + lambda * u_t);
}

}  // namespace fracdiff
