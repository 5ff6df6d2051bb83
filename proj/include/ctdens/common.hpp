#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctdens {

//! Raised when an iterative numeric routine fails to reach its tolerance.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& what)
    : std::runtime_error(what)
  {}
};

//! Raised when a model fit cannot be completed; carries the ELBO trace
//! accumulated up to the failure.
class fit_error : public std::runtime_error {
public:
  fit_error(const std::string& what, std::vector<double> elbo_trace = {})
    : std::runtime_error(what)
    , elbo_trace(std::move(elbo_trace))
  {}

  std::vector<double> elbo_trace;
};

//! Raised on malformed or degenerate input data; `where` names the
//! offending row/column when known.
class data_error : public std::runtime_error {
public:
  explicit data_error(const std::string& what)
    : std::runtime_error(what)
  {}
};

namespace constants {
inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double log_2pi = 1.8378770664093454835606594728112353;
//! Probabilities are clamped to [delta, 1 - delta] before quantile
//! inversion; cdf values of extreme points can round to exactly 0 or 1.
inline constexpr double prob_clamp_delta = 1e-12;
} // namespace constants

//! Clamp a probability away from {0, 1} so quantile transforms stay finite.
inline double clamp_probability(double u)
{
  const double lo = constants::prob_clamp_delta;
  const double hi = 1.0 - constants::prob_clamp_delta;
  if (u < lo)
    return lo;
  if (u > hi)
    return hi;
  return u;
}

} // namespace ctdens
