#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/numerics/spd_matrix.hpp"

namespace ctdens {

//! Multivariate normal log density at x with mean mu and covariance cov.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const SpdMatrix& cov)
{
  const int d = cov.dim();
  const double quad = cov.quad_form(x - mu);
  return -0.5 * (d * constants::log_2pi + cov.log_det() + quad);
}

//! Multivariate Student t log density at x; scale parameterization, so
//! the covariance is scale * nu / (nu - 2) when nu > 2.
inline double mvt_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const SpdMatrix& scale, double nu)
{
  if (!(nu > 0.0))
    throw std::domain_error("mvt_logpdf: dof must be positive");
  const int d = scale.dim();
  const double quad = scale.quad_form(x - mu);
  return log_gamma(0.5 * (nu + d)) - log_gamma(0.5 * nu) - 0.5 * d * std::log(nu * constants::pi)
         - 0.5 * scale.log_det() - 0.5 * (nu + d) * std::log1p(quad / nu);
}

} // namespace ctdens
