#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ctdens/common.hpp"

namespace ctdens {

struct InvertOptions {
  double tol = 1e-10;      // |cdf(x) - u| at the returned point
  int max_iter = 200;      // Brent iterations after bracketing
  int max_expand = 200;    // bracket doublings before giving up
};

//! Invert a continuous monotone cdf: find x with |cdf(x) - u| < tol.
//! u is clamped away from {0, 1} first.  `center` and `width` seed the
//! bracket, which expands geometrically until it straddles u.
template <typename CdfFn>
double invert_cdf(CdfFn&& cdf, double u, double center, double width, const InvertOptions& opts = {})
{
  u = clamp_probability(u);
  if (!(width > 0.0) || !std::isfinite(center))
    throw std::invalid_argument("invert_cdf: bracket hints must be finite with positive width");

  double a = center - width;
  double b = center + width;
  double fa = cdf(a) - u;
  double fb = cdf(b) - u;
  int expand = 0;
  double step = width;
  while (fa > 0.0) {
    if (++expand > opts.max_expand)
      throw numeric_error("invert_cdf: failed to bracket below u = " + std::to_string(u));
    step *= 2.0;
    a -= step;
    fa = cdf(a) - u;
  }
  while (fb < 0.0) {
    if (++expand > opts.max_expand)
      throw numeric_error("invert_cdf: failed to bracket above u = " + std::to_string(u));
    step *= 2.0;
    b += step;
    fb = cdf(b) - u;
  }
  if (fa == 0.0)
    return a;
  if (fb == 0.0)
    return b;

  // Brent's method on f(x) = cdf(x) - u.
  double c = a, fc = fa;
  double d = b - a, e = b - a;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    if (std::fabs(fb) < opts.tol)
      return b;
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) + 1e-300;
    const double xm = 0.5 * (c - b);
    if (std::fabs(xm) <= tol1)
      return b;
    if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
      const double s = fb / fa;
      double p, q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0)
        q = -q;
      p = std::fabs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::fabs(tol1 * q), std::fabs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    if (std::fabs(d) > tol1)
      b += d;
    else
      b += (xm > 0.0 ? tol1 : -tol1);
    fb = cdf(b) - u;
  }
  throw numeric_error("invert_cdf: Brent iteration limit reached at u = " + std::to_string(u));
}

} // namespace ctdens
