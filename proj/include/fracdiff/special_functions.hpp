#pragma once

#include <cstddef>

namespace fracdiff {

// Parameters of the two-parameter Mittag-Leffler function E_{alpha,beta}(z).
struct MlParams {
  double alpha;  // order parameter, > 0
  double beta;   // second parameter, finite real
};

// Gamma function with a hard error at the poles (non-positive integers).
// Relative error <= 1e-12 over the double range.
double gamma_eval(double x);

// Evaluate E_{alpha,beta}(z) for real z.
//
// Branch structure: Taylor series (Kahan-compensated) for |z| <= 1; for
// z < -1 a real-axis integral representation of the deep-negative branch,
// after reducing beta into (0,1] by the recurrence
// E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z run upward; for z > 1 the
// same Taylor series with a dynamic term count. A pure Taylor/asymptotic
// split at larger |z| (the textbook recipe) loses 6-8 digits to cancellation
// in double precision; the integral branch keeps the negative axis at
// ~1e-15 relative error all the way to z = -1e6.
//
// Certified range: alpha in (0,1]; any finite beta for |z| <= 1; beta > 0
// for z < -1 with z >= -1e9; z > 1 only while z^(1/alpha) <= 700 (otherwise
// the value overflows double). alpha = 1 with beta in {1,2} uses exp/expm1
// directly for any z. Out-of-range arguments throw with the range named.
double ml_eval(const MlParams& params, double z);

namespace detail {
// The two evaluation branches of ml_eval, exposed so tests can verify that
// they agree on an overlap band (both are accurate for moderate negative z).
// ml_series_branch is the Taylor series; ml_negative_branch is the integral
// representation with beta-reduction, valid for z < -1.
double ml_series_branch(const MlParams& params, double z);
double ml_negative_branch(const MlParams& params, double z);
}  // namespace detail

// Residual of the Caputo eigen-identity at time t:
//   | D_t^alpha E_{alpha,1}(-lambda t^alpha) + lambda E_{alpha,1}(-lambda t^alpha) |
// where the derivative is approximated on n_samples uniform steps by the
// same L1 product-integration quadrature the time stepper uses.  Under step
// halving the residual decreases at order min(2 - alpha, 1 + alpha): the
// quadrature itself carries the 2 - alpha rate for smooth inputs, and the
// t^alpha leading singularity of the function caps it at 1 + alpha on a
// uniform grid (the cap binds for alpha < 1/2).  For alpha = 1 the L1
// weights degenerate, so the derivative of the (then exponential) samples
// is taken by a centered difference instead.
// Requires beta == 1, lambda > 0, t > 0.
double ml_caputo_identity_residual(const MlParams& params, double lambda,
                                   double t, std::size_t n_samples = 10000);

}  // namespace fracdiff
