#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/numerics/spd_matrix.hpp"
#include "ctdens/vb/family.hpp"

namespace ctdens::vb {

//! Variational state for full-scale-matrix mixtures (families mn, mt).
//! Factorization: q(labels) q(pi) prod_j q(mu_j) q(T_j) and, for mt,
//! q(w_ij) per observation/component pair.  q(mu_j) is a free Gaussian
//! with covariance mu_cov; every sweep step is an exact coordinate-ascent
//! update of this factorization, so the ELBO never decreases.
struct FullScaleState {
  Family family = Family::mn;
  int n = 0;
  int d = 0;
  Eigen::MatrixXd resp;               // n x K responsibilities
  Eigen::VectorXd alpha;              // Dirichlet parameters
  Eigen::VectorXd kappa;              // location precision multipliers
  std::vector<Eigen::VectorXd> mu;    // posterior means of mu_j
  std::vector<Eigen::MatrixXd> mu_cov; // posterior covariances of mu_j
  std::vector<SpdMatrix> sigma;       // Wishart scale matrices Sigma_j
  Eigen::VectorXd tau;                // Wishart degrees of freedom
  std::vector<int> nu;                // component dofs (mt only)
  Eigen::MatrixXd w_mean;             // E[w_ij]; ones for mn
  Eigen::MatrixXd w_log_mean;         // E[log w_ij]; zeros for mn
  Eigen::MatrixXd w_rate;             // Gamma rates of q(w_ij) (mt only)
  Eigen::MatrixXd z;                  // E[(x_i - mu_j)' T_j (x_i - mu_j)]
  Eigen::VectorXd tr_tc;              // tr(E[T_j] mu_cov_j) per component
  double elbo = -std::numeric_limits<double>::infinity();

  int n_components() const { return static_cast<int>(resp.cols()); }
};

namespace detail {

//! E[log pi_j] under Dir(alpha).
inline Eigen::VectorXd dirichlet_log_mean(const Eigen::VectorXd& alpha)
{
  const double total = digamma(alpha.sum());
  Eigen::VectorXd out(alpha.size());
  for (int j = 0; j < alpha.size(); ++j)
    out[j] = digamma(alpha[j]) - total;
  return out;
}

//! E[log |T_j|] under Wishart(tau, Sigma^{-1}).
inline double wishart_log_det_mean(double tau, const SpdMatrix& sigma)
{
  const int d = sigma.dim();
  double value = d * std::log(2.0) - sigma.log_det();
  for (int h = 1; h <= d; ++h)
    value += digamma(0.5 * (tau + 1.0 - h));
  return value;
}

//! Refresh z_ij and tr(E[T_j] C_j) from the current parameter blocks.
inline void full_scale_refresh_z(FullScaleState& s, const Eigen::MatrixXd& x)
{
  const int K = s.n_components();
  s.z.resize(s.n, K);
  s.tr_tc.resize(K);
  for (int j = 0; j < K; ++j) {
    s.tr_tc[j] = s.tau[j] * s.sigma[j].trace_solve(s.mu_cov[j]);
    const Eigen::MatrixXd centered = x.rowwise() - s.mu[j].transpose();
    const Eigen::MatrixXd solved = s.sigma[j].solve(centered.transpose());
    s.z.col(j) =
        s.tau[j] * (centered.array() * solved.transpose().array()).rowwise().sum().matrix();
    s.z.col(j).array() += s.tr_tc[j];
  }
}

//! Pair log weights l_ij: the complete per-pair ELBO contribution of
//! observation i under component j, excluding the label entropy.  These
//! are both the softmax logits of the label update and the integrand of
//! the likelihood part of the bound.
inline Eigen::MatrixXd full_scale_pair_logw(const FullScaleState& s)
{
  const int K = s.n_components();
  const Eigen::VectorXd log_pi = dirichlet_log_mean(s.alpha);
  Eigen::MatrixXd ell(s.n, K);
  for (int j = 0; j < K; ++j) {
    const double log_det_t = wishart_log_det_mean(s.tau[j], s.sigma[j]);
    ell.col(j).array() = log_pi[j] + 0.5 * log_det_t - 0.5 * s.d * constants::log_2pi
                         + 0.5 * s.d * s.w_log_mean.col(j).array()
                         - 0.5 * s.w_mean.col(j).array() * s.z.col(j).array();
    if (is_t_family(s.family)) {
      // E[log p(w | nu)] - E[log q(w)] for the current Gamma posterior.
      const double half_nu = 0.5 * s.nu[j];
      const double a_w = half_nu + 0.5 * s.d;
      ell.col(j).array() += half_nu * std::log(half_nu) - log_gamma(half_nu)
                            + (half_nu - 1.0) * s.w_log_mean.col(j).array()
                            - half_nu * s.w_mean.col(j).array()
                            - (a_w * s.w_rate.col(j).array().log() - log_gamma(a_w)
                               + (a_w - 1.0) * s.w_log_mean.col(j).array()
                               - s.w_rate.col(j).array() * s.w_mean.col(j).array());
    }
  }
  return ell;
}

//! Exact update of q(w_ij) at the current z and dofs (mt only).
inline void full_scale_update_w(FullScaleState& s)
{
  for (int j = 0; j < s.n_components(); ++j) {
    const double a_w = 0.5 * (s.nu[j] + s.d);
    const double dig_a = digamma(a_w);
    s.w_rate.col(j) = 0.5 * (s.z.col(j).array() + s.nu[j]).matrix();
    s.w_mean.col(j) = a_w * s.w_rate.col(j).cwiseInverse();
    s.w_log_mean.col(j) = (dig_a - s.w_rate.col(j).array().log()).matrix();
  }
}

//! Profile objective for the integer dof grid: the pair terms of the
//! bound at the jointly optimal q(w), summed over observations.
inline double dof_objective(double nu, double a_inc, const Eigen::VectorXd& q, const Eigen::VectorXd& z)
{
  const double half_nu = 0.5 * nu;
  const double a_w = half_nu + a_inc;
  const double constant = half_nu * std::log(half_nu) - log_gamma(half_nu) + log_gamma(a_w);
  const Eigen::ArrayXd log_rate = (half_nu + 0.5 * z.array()).log();
  return q.sum() * constant - a_w * (q.array() * log_rate).sum();
}

//! Exhaustive search of the integer dof grid; ties break to the
//! smallest dof.  Returns the argmax of dof_objective.
inline int dof_grid_argmax(double a_inc, const Eigen::VectorXd& q, const Eigen::VectorXd& z, int nu_max)
{
  int best_nu = 1;
  double best = dof_objective(1.0, a_inc, q, z);
  for (int nu = 2; nu <= nu_max; ++nu) {
    const double value = dof_objective(nu, a_inc, q, z);
    if (value > best + 1e-12 * std::max(1.0, std::fabs(best))) {
      best = value;
      best_nu = nu;
    }
  }
  return best_nu;
}

} // namespace detail

//! One full coordinate-ascent sweep: labels, mixture weights, location
//! and scale blocks, then (mt) the dof grid with q(w) refreshed at the
//! new parameters.  Leaves z and the w moments consistent with the
//! final parameter blocks.
inline void vb_sweep_full_scale(FullScaleState& s, const Eigen::MatrixXd& x, const PriorConfig& priors)
{
  const int K = s.n_components();
  const bool t_family = is_t_family(s.family);
  const double tau0 = priors.resolve_tau0(s.d);

  detail::full_scale_refresh_z(s, x);
  if (t_family)
    detail::full_scale_update_w(s);

  // Label update: softmax of the pair log weights, row-wise.
  const Eigen::MatrixXd ell = detail::full_scale_pair_logw(s);
  for (int i = 0; i < s.n; ++i) {
    const double m = ell.row(i).maxCoeff();
    Eigen::ArrayXd p = (ell.row(i).array() - m).exp();
    s.resp.row(i) = (p / p.sum()).matrix();
  }

  s.alpha = Eigen::VectorXd::Constant(K, priors.alpha0) + s.resp.colwise().sum().transpose();

  for (int j = 0; j < K; ++j) {
    const Eigen::ArrayXd qw = s.resp.col(j).array() * s.w_mean.col(j).array();
    const double sum_qw = qw.sum();
    const double kappa_new = priors.kappa0 + sum_qw;
    const Eigen::VectorXd mu_new = (x.array().colwise() * qw).colwise().sum().transpose() / kappa_new;
    // q(mu_j) covariance at the current scale posterior.
    const Eigen::MatrixXd mu_cov_new = s.sigma[j].matrix() / (kappa_new * s.tau[j]);
    const Eigen::MatrixXd prev_scale_mean = s.sigma[j].matrix() / s.tau[j];

    const Eigen::MatrixXd centered = x.rowwise() - mu_new.transpose();
    const Eigen::MatrixXd weighted = centered.array().colwise() * qw;
    Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(s.d, s.d) * priors.sigma0;
    scale += priors.kappa0 * mu_new * mu_new.transpose();
    scale += weighted.transpose() * centered;
    scale += kappa_new * mu_cov_new;
    scale = 0.5 * (scale + scale.transpose().eval());

    s.kappa[j] = kappa_new;
    s.mu[j] = mu_new;
    s.mu_cov[j] = mu_cov_new;
    s.tau[j] = tau0 + 1.0 + s.resp.col(j).sum();
    s.sigma[j] = spd_with_jitter(scale);
  }

  detail::full_scale_refresh_z(s, x);
  if (t_family) {
    for (int j = 0; j < K; ++j)
      s.nu[j] = detail::dof_grid_argmax(0.5 * s.d, s.resp.col(j), s.z.col(j), priors.nu_max);
    detail::full_scale_update_w(s);
  }
}

//! Evidence lower bound at the current state.  All constants are kept,
//! so values are comparable across different component counts.
inline double elbo_full_scale(const FullScaleState& s, const PriorConfig& priors)
{
  const int K = s.n_components();
  const int d = s.d;
  const double tau0 = priors.resolve_tau0(d);

  const Eigen::MatrixXd ell = detail::full_scale_pair_logw(s);
  double bound = (s.resp.array() * ell.array()).sum();
  bound -= (s.resp.array() > 0.0).select(s.resp.array() * s.resp.array().log(), 0.0).sum();

  // Dirichlet block.
  const Eigen::VectorXd log_pi = detail::dirichlet_log_mean(s.alpha);
  bound += log_gamma(K * priors.alpha0) - K * log_gamma(priors.alpha0);
  bound -= log_gamma(s.alpha.sum());
  for (int j = 0; j < K; ++j) {
    bound += log_gamma(s.alpha[j]);
    bound += (priors.alpha0 - s.alpha[j]) * log_pi[j];
  }

  for (int j = 0; j < K; ++j) {
    const double log_det_t = detail::wishart_log_det_mean(s.tau[j], s.sigma[j]);
    // Location block: E[log p(mu | T)] - E[log q(mu)].
    const double quad_mu = s.tau[j] * s.sigma[j].quad_form(s.mu[j]);
    const double log_det_cov = SpdMatrix(s.mu_cov[j]).log_det();
    bound += 0.5 * d * std::log(priors.kappa0) + 0.5 * log_det_t
             - 0.5 * priors.kappa0 * (quad_mu + s.tr_tc[j]);
    bound += 0.5 * log_det_cov + 0.5 * d;
    // Scale block: E[log p(T)] - E[log q(T)].
    const double trace_prec = s.tau[j] * s.sigma[j].trace_solve(Eigen::MatrixXd::Identity(d, d));
    bound += 0.5 * tau0 * d * std::log(priors.sigma0) - 0.5 * tau0 * d * std::log(2.0)
             - log_multivariate_gamma(d, 0.5 * tau0) + 0.5 * (tau0 - d - 1.0) * log_det_t
             - 0.5 * priors.sigma0 * trace_prec;
    bound -= 0.5 * s.tau[j] * s.sigma[j].log_det() - 0.5 * s.tau[j] * d * std::log(2.0)
             - log_multivariate_gamma(d, 0.5 * s.tau[j]) + 0.5 * (s.tau[j] - d - 1.0) * log_det_t
             - 0.5 * s.tau[j] * d;
    if (is_t_family(s.family))
      bound -= std::log(static_cast<double>(priors.nu_max));
  }
  return bound;
}

} // namespace ctdens::vb
