#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/marginals/marginal.hpp"
#include "ctdens/numerics/density.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/numerics/spd_matrix.hpp"

namespace ctdens {

enum class CopulaKind { normal, t };

inline std::string copula_kind_name(CopulaKind k)
{
  return k == CopulaKind::normal ? "normal" : "t";
}

//! Parametric copula density with plug-in marginals: a normal or t
//! copula with correlation matrix R (and dof for the t copula).
struct ParametricCopulaModel {
  CopulaKind kind = CopulaKind::normal;
  Eigen::MatrixXd correlation;
  int dof = 0; // t copula only
  std::vector<MarginalModel> marginals;

  int dim() const { return static_cast<int>(correlation.rows()); }

  const SpdMatrix& correlation_factor() const
  {
    if (!cache_)
      cache_.emplace(correlation);
    return *cache_;
  }

private:
  mutable std::optional<SpdMatrix> cache_;
};

namespace detail {

//! Rescale a covariance-like matrix to unit diagonal.
inline Eigen::MatrixXd to_correlation(const Eigen::MatrixXd& v)
{
  const Eigen::VectorXd inv_sd = v.diagonal().array().sqrt().inverse();
  Eigen::MatrixXd r = inv_sd.asDiagonal() * v * inv_sd.asDiagonal();
  r.diagonal().setOnes();
  return 0.5 * (r + r.transpose().eval());
}

//! Zero-mean scale MLE of a multivariate t with fixed dof by EM,
//! followed by correlation rescaling.
inline Eigen::MatrixXd t_scale_em(const Eigen::MatrixXd& x, int nu, int max_iter = 200, double tol = 1e-9)
{
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  Eigen::MatrixXd v = x.transpose() * x / n;
  v.diagonal().array() += 1e-12;
  for (int iter = 0; iter < max_iter; ++iter) {
    const SpdMatrix sv = spd_with_jitter(v);
    const Eigen::MatrixXd solved = sv.solve(x.transpose());
    const Eigen::ArrayXd quad = (x.array() * solved.transpose().array()).rowwise().sum();
    const Eigen::ArrayXd w = (nu + d) / (nu + quad);
    Eigen::MatrixXd next = (x.array().colwise() * w).matrix().transpose() * x / n;
    next = 0.5 * (next + next.transpose().eval());
    const double delta = (next - v).cwiseAbs().maxCoeff() / std::max(1.0, v.cwiseAbs().maxCoeff());
    v = next;
    if (delta < tol)
      break;
  }
  return to_correlation(v);
}

} // namespace detail

//! Fit a parametric copula on unit-cube data.  The normal copula uses
//! the moment estimate of the correlation of the normal scores; the t
//! copula profiles an integer dof grid, refitting the scale by EM and
//! scoring each dof by the copula log likelihood.
inline ParametricCopulaModel fit_parametric_copula(const Eigen::MatrixXd& u, CopulaKind kind,
                                                   int nu_max = 100)
{
  const int n = static_cast<int>(u.rows());
  const int d = static_cast<int>(u.cols());
  if (n < 2 || d < 1)
    throw data_error("fit_parametric_copula: need at least two rows");

  ParametricCopulaModel model;
  model.kind = kind;

  if (kind == CopulaKind::normal) {
    Eigen::MatrixXd x(n, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i)
        x(i, j) = normal_quantile(u(i, j));
    const Eigen::MatrixXd v = x.transpose() * x / n;
    model.correlation = detail::to_correlation(v);
    spd_with_jitter(model.correlation); // validate positive definiteness
    return model;
  }

  double best = -std::numeric_limits<double>::infinity();
  for (int nu = 1; nu <= nu_max; ++nu) {
    Eigen::MatrixXd x(n, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i)
        x(i, j) = student_t_quantile(u(i, j), nu);
    const Eigen::MatrixXd r = detail::t_scale_em(x, nu);
    const SpdMatrix sr = spd_with_jitter(r);
    double loglik = 0.0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
      loglik += mvt_logpdf(x.row(i).transpose(), zero, sr, nu);
      for (int j = 0; j < d; ++j)
        loglik -= student_t_logpdf(x(i, j), nu);
    }
    if (loglik > best) {
      best = loglik;
      model.correlation = r;
      model.dof = nu;
    }
  }
  return model;
}

//! Log density of the parametric-copula estimate at y in data units.
inline double parametric_copula_logpdf(const ParametricCopulaModel& model, const Eigen::VectorXd& y)
{
  const int d = model.dim();
  if (y.size() != d || static_cast<int>(model.marginals.size()) != d)
    throw std::invalid_argument("parametric_copula_logpdf: dimension mismatch");
  Eigen::VectorXd x(d);
  double marginal_part = 0.0;
  for (int j = 0; j < d; ++j) {
    const double u = clamp_probability(model.marginals[j].cdf(y[j]));
    marginal_part += model.marginals[j].log_pdf(y[j]);
    if (model.kind == CopulaKind::normal) {
      x[j] = normal_quantile(u);
      marginal_part -= normal_logpdf(x[j]);
    } else {
      x[j] = student_t_quantile(u, model.dof);
      marginal_part -= student_t_logpdf(x[j], model.dof);
    }
  }
  const SpdMatrix& r = model.correlation_factor();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  const double joint = model.kind == CopulaKind::normal ? mvn_logpdf(x, zero, r)
                                                        : mvt_logpdf(x, zero, r, model.dof);
  return joint + marginal_part;
}

} // namespace ctdens
