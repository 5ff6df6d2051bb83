#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "ctdens/common.hpp"

namespace ctdens {

//! log Gamma(x) for x > 0.
inline double log_gamma(double x)
{
  if (!(x > 0.0))
    throw std::domain_error("log_gamma: argument must be positive, got " + std::to_string(x));
  return std::lgamma(x);
}

//! Digamma Psi(x) for x > 0; recurrence into the asymptotic regime, then
//! the Bernoulli tail through B_12.  Absolute error < 1e-12 on (0, 1e6].
inline double digamma(double x)
{
  if (!(x > 0.0))
    throw std::domain_error("digamma: argument must be positive, got " + std::to_string(x));
  double shift = 0.0;
  while (x < 8.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv2
      * (1.0 / 12.0
         - inv2
               * (1.0 / 120.0
                  - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

//! log of the multivariate gamma function Gamma_d(a); a > (d - 1) / 2.
inline double log_multivariate_gamma(int d, double a)
{
  double value = 0.25 * d * (d - 1) * std::log(constants::pi);
  for (int h = 1; h <= d; ++h)
    value += log_gamma(a + 0.5 * (1 - h));
  return value;
}

//! Standard normal log density.
inline double normal_logpdf(double z) { return -0.5 * (constants::log_2pi + z * z); }

//! Standard normal cdf via erfc; accurate in both tails.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace detail {

//! Rational approximation of the standard normal quantile (Acklam).
inline double normal_quantile_seed(double u)
{
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double u_low = 0.02425;
  if (u < u_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
           / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (u > 1.0 - u_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - u));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
           / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = u - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
         / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace detail

//! Standard normal quantile; rational seed plus two Halley refinements.
inline double normal_quantile(double u)
{
  u = clamp_probability(u);
  double z = detail::normal_quantile_seed(u);
  for (int iter = 0; iter < 2; ++iter) {
    const double err = normal_cdf(z) - u;
    const double pdf = std::exp(normal_logpdf(z));
    if (pdf <= 0.0)
      break;
    const double newton = err / pdf;
    z -= newton / (1.0 + 0.5 * z * newton);
  }
  return z;
}

namespace detail {

//! Continued fraction for the regularized incomplete beta (Lentz).
inline double inc_beta_cf(double a, double b, double x)
{
  const double eps = std::numeric_limits<double>::epsilon();
  const double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny)
    d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny)
      d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny)
      c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny)
      d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny)
      c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 10.0 * eps)
      return h;
  }
  throw numeric_error("inc_beta: continued fraction did not converge");
}

} // namespace detail

//! Regularized incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x)
{
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("inc_beta: shape parameters must be positive");
  if (x <= 0.0)
    return 0.0;
  if (x >= 1.0)
    return 1.0;
  const double log_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * detail::inc_beta_cf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * detail::inc_beta_cf(b, a, 1.0 - x) / b;
}

//! Standard Student t log density with nu degrees of freedom.
inline double student_t_logpdf(double t, double nu)
{
  if (!(nu > 0.0))
    throw std::domain_error("student_t_logpdf: dof must be positive");
  return log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(nu * constants::pi)
         - 0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

//! Standard Student t cdf with nu degrees of freedom.
inline double student_t_cdf(double t, double nu)
{
  if (!(nu > 0.0))
    throw std::domain_error("student_t_cdf: dof must be positive");
  if (std::isinf(t))
    return t > 0.0 ? 1.0 : 0.0;
  const double half_tail = 0.5 * inc_beta(0.5 * nu, 0.5, nu / (nu + t * t));
  return t <= 0.0 ? half_tail : 1.0 - half_tail;
}

//! Standard Student t quantile; normal-based seed, safeguarded Newton.
inline double student_t_quantile(double u, double nu)
{
  u = clamp_probability(u);
  const double z = normal_quantile(u);
  // Cornish-Fisher expansion of the t quantile around the normal one.
  const double z3 = z * z * z;
  const double z5 = z3 * z * z;
  double t = z + (z3 + z) / (4.0 * nu) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    const double err = student_t_cdf(t, nu) - u;
    if (std::fabs(err) < 1e-13)
      return t;
    if (err > 0.0)
      hi = t;
    else
      lo = t;
    const double pdf = std::exp(student_t_logpdf(t, nu));
    double next = t - err / pdf;
    if (!(next > lo) || !(next < hi) || !std::isfinite(next)) {
      // Bisection fallback; widen an open side geometrically.
      if (std::isinf(lo))
        next = hi - 2.0 * (1.0 + std::fabs(hi));
      else if (std::isinf(hi))
        next = lo + 2.0 * (1.0 + std::fabs(lo));
      else
        next = 0.5 * (lo + hi);
    }
    t = next;
  }
  return t;
}

} // namespace ctdens
