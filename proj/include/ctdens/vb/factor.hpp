#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/vb/family.hpp"
#include "ctdens/vb/full_scale.hpp"

namespace ctdens::vb {

//! Largest factor dimension for which the factor model has fewer free
//! parameters than a full scale matrix: floor((2d + 1 - sqrt(8d + 1))/2).
inline int factor_dim_max(int d)
{
  return static_cast<int>(std::floor(0.5 * (2.0 * d + 1.0 - std::sqrt(8.0 * d + 1.0))));
}

//! Variational state for mixtures of factor analyzers (families mfa,
//! mtfa).  Factorization: q(labels) q(pi) and, per component, q(mu_j),
//! column-wise q(Lambda_jl) and q(tau_jl), q(psi_j), plus per-pair
//! factor scores q(z_ij) and (mtfa) q(w_ij).  Sweeps are exact
//! coordinate ascent, so the ELBO never decreases.
struct FactorState {
  Family family = Family::mfa;
  int n = 0;
  int d = 0;
  std::vector<int> k;                    // factor dimension per component
  Eigen::MatrixXd resp;                  // n x K
  Eigen::VectorXd alpha;
  std::vector<Eigen::VectorXd> mu_mean;  // posterior mean of mu_j
  Eigen::VectorXd mu_var;                // isotropic posterior variance of mu_j
  std::vector<Eigen::MatrixXd> lambda_mean; // d x k_j
  std::vector<Eigen::VectorXd> lambda_var;  // column variances, k_j
  std::vector<Eigen::VectorXd> tau_rate;    // ARD Gamma rates per column
  Eigen::VectorXd psi_shape, psi_rate;      // noise precision posteriors
  std::vector<int> nu;                      // mtfa only
  // Per-pair factor score posteriors: mean rows and shared shape M_j;
  // covariance of z_ij is M_j / w_at_z(i, j).
  std::vector<Eigen::MatrixXd> z_mean;      // n x k_j
  std::vector<Eigen::MatrixXd> m_mat;       // k_j x k_j
  std::vector<double> m_logdet;
  std::vector<double> m_trace;
  std::vector<Eigen::MatrixXd> ltl;         // E[Lambda_j' Lambda_j]
  std::vector<double> tr_m_ltl;             // tr(M_j E[Lambda_j' Lambda_j])
  Eigen::MatrixXd w_at_z;                   // E[w] snapshot used by q(z)
  Eigen::MatrixXd w_mean, w_log_mean, w_rate;
  Eigen::MatrixXd c;                        // E ||x - mu - Lambda z||^2
  double elbo = -std::numeric_limits<double>::infinity();

  int n_components() const { return static_cast<int>(resp.cols()); }

  double psi_mean(int j) const { return psi_shape[j] / psi_rate[j]; }
  double psi_log_mean(int j) const { return digamma(psi_shape[j]) - std::log(psi_rate[j]); }
};

namespace detail {

//! Exact update of every q(z_ij) for component j; records the E[w]
//! snapshot the scores were built with.
inline void factor_refresh_scores(FactorState& s, const Eigen::MatrixXd& x, int j)
{
  const int kj = s.k[j];
  s.ltl[j] = Eigen::MatrixXd::Zero(kj, kj);
  if (kj > 0) {
    s.ltl[j] = s.lambda_mean[j].transpose() * s.lambda_mean[j];
    s.ltl[j].diagonal() += s.d * s.lambda_var[j];
  }
  if (kj == 0) {
    s.m_mat[j].resize(0, 0);
    s.m_logdet[j] = 0.0;
    s.m_trace[j] = 0.0;
    s.tr_m_ltl[j] = 0.0;
    s.z_mean[j].resize(s.n, 0);
    s.w_at_z.col(j) = s.w_mean.col(j);
    return;
  }
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(kj, kj) + s.psi_mean(j) * s.ltl[j];
  prec = 0.5 * (prec + prec.transpose().eval());
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success)
    throw numeric_error("factor_refresh_scores: score precision not positive definite");
  s.m_mat[j] = llt.solve(Eigen::MatrixXd::Identity(kj, kj));
  s.m_logdet[j] = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  s.m_trace[j] = s.m_mat[j].trace();
  s.tr_m_ltl[j] = (s.m_mat[j] * s.ltl[j]).trace();
  const Eigen::MatrixXd centered = x.rowwise() - s.mu_mean[j].transpose();
  s.z_mean[j] = s.psi_mean(j) * (centered * s.lambda_mean[j] * s.m_mat[j]);
  s.w_at_z.col(j) = s.w_mean.col(j);
}

//! Refresh c_ij = E||x_i - mu_j - Lambda_j z_ij||^2 for component j at
//! the current location, loading, and score posteriors.
inline void factor_refresh_c(FactorState& s, const Eigen::MatrixXd& x, int j)
{
  const Eigen::MatrixXd centered = x.rowwise() - s.mu_mean[j].transpose();
  Eigen::ArrayXd c = centered.rowwise().squaredNorm().array() + s.d * s.mu_var[j];
  if (s.k[j] > 0) {
    const Eigen::MatrixXd xl = centered * s.lambda_mean[j];
    c -= 2.0 * (xl.array() * s.z_mean[j].array()).rowwise().sum();
    c += ((s.z_mean[j] * s.ltl[j]).array() * s.z_mean[j].array()).rowwise().sum();
    c += s.tr_m_ltl[j] / s.w_at_z.col(j).array();
  }
  s.c.col(j) = c.matrix();
}

//! E[z_ij' z_ij] for component j, all observations.
inline Eigen::ArrayXd factor_score_sqnorm(const FactorState& s, int j)
{
  if (s.k[j] == 0)
    return Eigen::ArrayXd::Zero(s.n);
  return s.z_mean[j].rowwise().squaredNorm().array() + s.m_trace[j] / s.w_at_z.col(j).array();
}

//! Exact update of q(w_ij) for component j at the current c and scores.
inline void factor_update_w(FactorState& s, int j)
{
  const double a_w = 0.5 * (s.nu[j] + s.k[j] + s.d);
  const double dig_a = digamma(a_w);
  const Eigen::ArrayXd b_tilde =
      0.5 * s.psi_mean(j) * s.c.col(j).array() + 0.5 * factor_score_sqnorm(s, j);
  s.w_rate.col(j) = (0.5 * s.nu[j] + b_tilde).matrix();
  s.w_mean.col(j) = a_w * s.w_rate.col(j).cwiseInverse();
  s.w_log_mean.col(j) = (dig_a - s.w_rate.col(j).array().log()).matrix();
}

//! Pair log weights for the factor families; complete per-pair ELBO
//! contributions and label-update logits, as in the full-scale engine.
inline Eigen::MatrixXd factor_pair_logw(const FactorState& s)
{
  const int K = s.n_components();
  const Eigen::VectorXd log_pi = dirichlet_log_mean(s.alpha);
  Eigen::MatrixXd ell(s.n, K);
  for (int j = 0; j < K; ++j) {
    const int kj = s.k[j];
    const Eigen::ArrayXd zz = factor_score_sqnorm(s, j);
    ell.col(j).array() = log_pi[j] + 0.5 * s.d * (s.psi_log_mean(j) - constants::log_2pi)
                         + 0.5 * s.d * s.w_log_mean.col(j).array()
                         - 0.5 * s.w_mean.col(j).array() * s.psi_mean(j) * s.c.col(j).array()
                         + 0.5 * kj * s.w_log_mean.col(j).array()
                         - 0.5 * s.w_mean.col(j).array() * zz
                         + 0.5 * (s.m_logdet[j] - kj * s.w_at_z.col(j).array().log())
                         + 0.5 * kj;
    if (is_t_family(s.family)) {
      const double half_nu = 0.5 * s.nu[j];
      const double a_w = half_nu + 0.5 * (kj + s.d);
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

} // namespace detail

//! One full coordinate-ascent sweep for the factor families.  Score,
//! weight, label, location, loading, ARD, and noise blocks in turn;
//! mtfa then optimizes the integer dofs with q(w) at its profile
//! optimum.  Leaves all caches consistent with the final blocks.
inline void vb_sweep_factor(FactorState& s, const Eigen::MatrixXd& x, const PriorConfig& priors)
{
  const int K = s.n_components();
  const bool t_family = is_t_family(s.family);

  for (int j = 0; j < K; ++j) {
    detail::factor_refresh_scores(s, x, j);
    detail::factor_refresh_c(s, x, j);
    if (t_family)
      detail::factor_update_w(s, j);
  }

  const Eigen::MatrixXd ell = detail::factor_pair_logw(s);
  for (int i = 0; i < s.n; ++i) {
    const double m = ell.row(i).maxCoeff();
    Eigen::ArrayXd p = (ell.row(i).array() - m).exp();
    s.resp.row(i) = (p / p.sum()).matrix();
  }

  s.alpha = Eigen::VectorXd::Constant(K, priors.alpha0) + s.resp.colwise().sum().transpose();

  for (int j = 0; j < K; ++j) {
    const int kj = s.k[j];
    const Eigen::ArrayXd qw = s.resp.col(j).array() * s.w_mean.col(j).array();
    const double sum_qw = qw.sum();
    const double sum_q = s.resp.col(j).sum();

    // Location block; flat prior on mu_j.  The precision underflows
    // when the component starves; the floor keeps this sweep finite
    // until the starvation guard culls the component.
    s.mu_var[j] = 1.0 / std::max(s.psi_mean(j) * sum_qw, 1e-290);
    Eigen::MatrixXd residual = x;
    if (kj > 0)
      residual -= s.z_mean[j] * s.lambda_mean[j].transpose();
    s.mu_mean[j] =
        s.mu_var[j] * s.psi_mean(j) * (residual.array().colwise() * qw).colwise().sum().transpose();

    if (kj > 0) {
      // Loading columns, Gauss-Seidel; E[z z']-weighted Gram uses the
      // score covariance M_j / w_at_z, whose w cancels against qw.
      const Eigen::MatrixXd centered = x.rowwise() - s.mu_mean[j].transpose();
      const Eigen::ArrayXd w_ratio = qw / s.w_at_z.col(j).array();
      Eigen::MatrixXd gram = (s.z_mean[j].array().colwise() * qw).matrix().transpose() * s.z_mean[j];
      gram += w_ratio.sum() * s.m_mat[j];
      const Eigen::MatrixXd cross =
          (s.z_mean[j].array().colwise() * qw).matrix().transpose() * centered; // k x d
      const double psi_mean = s.psi_mean(j);
      for (int l = 0; l < kj; ++l) {
        const double tau_mean = (priors.a + 0.5 * s.d) / s.tau_rate[j][l];
        const double var = 1.0 / (tau_mean + psi_mean * gram(l, l));
        Eigen::VectorXd r = cross.row(l).transpose();
        for (int t = 0; t < kj; ++t)
          if (t != l)
            r -= gram(l, t) * s.lambda_mean[j].col(t);
        s.lambda_var[j][l] = var;
        s.lambda_mean[j].col(l) = var * psi_mean * r;
      }
      for (int l = 0; l < kj; ++l)
        s.tau_rate[j][l] =
            priors.b + 0.5 * s.lambda_mean[j].col(l).squaredNorm() + 0.5 * s.d * s.lambda_var[j][l];
      s.ltl[j] = s.lambda_mean[j].transpose() * s.lambda_mean[j];
      s.ltl[j].diagonal() += s.d * s.lambda_var[j];
      s.tr_m_ltl[j] = (s.m_mat[j] * s.ltl[j]).trace();
    }

    // Noise block needs c at the new location and loadings.
    detail::factor_refresh_c(s, x, j);
    s.psi_shape[j] = priors.a + 0.5 * s.d * sum_q;
    s.psi_rate[j] = priors.b + 0.5 * (s.resp.col(j).array() * s.w_mean.col(j).array() * s.c.col(j).array()).sum();

    if (t_family) {
      const double a_inc = 0.5 * (kj + s.d);
      const Eigen::VectorXd b2 =
          (s.psi_mean(j) * s.c.col(j).array() + detail::factor_score_sqnorm(s, j)).matrix();
      s.nu[j] = detail::dof_grid_argmax(a_inc, s.resp.col(j), b2, priors.nu_max);
      detail::factor_update_w(s, j);
    }
  }
}

//! Evidence lower bound at the current factor state; all constants
//! kept, comparable across component counts and factor dimensions.
inline double elbo_factor(const FactorState& s, const PriorConfig& priors)
{
  const int K = s.n_components();
  const int d = s.d;

  const Eigen::MatrixXd ell = detail::factor_pair_logw(s);
  double bound = (s.resp.array() * ell.array()).sum();
  bound -= (s.resp.array() > 0.0).select(s.resp.array() * s.resp.array().log(), 0.0).sum();

  const Eigen::VectorXd log_pi = detail::dirichlet_log_mean(s.alpha);
  bound += log_gamma(K * priors.alpha0) - K * log_gamma(priors.alpha0);
  bound -= log_gamma(s.alpha.sum());
  for (int j = 0; j < K; ++j) {
    bound += log_gamma(s.alpha[j]);
    bound += (priors.alpha0 - s.alpha[j]) * log_pi[j];
  }

  for (int j = 0; j < K; ++j) {
    // Location block: flat prior, so only the Gaussian entropy.
    bound += 0.5 * d * (constants::log_2pi + std::log(s.mu_var[j])) + 0.5 * d;

    const double tau_shape = priors.a + 0.5 * d;
    for (int l = 0; l < s.k[j]; ++l) {
      const double tau_mean = tau_shape / s.tau_rate[j][l];
      const double tau_log_mean = digamma(tau_shape) - std::log(s.tau_rate[j][l]);
      const double col_sqnorm = s.lambda_mean[j].col(l).squaredNorm() + d * s.lambda_var[j][l];
      // Loading column: E[log p(Lambda_l | tau_l)] - E[log q(Lambda_l)].
      bound += 0.5 * d * tau_log_mean - 0.5 * tau_mean * col_sqnorm
               + 0.5 * d * std::log(s.lambda_var[j][l]) + 0.5 * d;
      // ARD precision: E[log p(tau_l)] - E[log q(tau_l)].
      bound += priors.a * std::log(priors.b) - log_gamma(priors.a) + (priors.a - 1.0) * tau_log_mean
               - priors.b * tau_mean;
      bound -= tau_shape * std::log(s.tau_rate[j][l]) - log_gamma(tau_shape)
               + (tau_shape - 1.0) * tau_log_mean - s.tau_rate[j][l] * tau_mean;
    }

    // Noise precision: E[log p(psi)] - E[log q(psi)].
    const double psi_mean = s.psi_mean(j);
    const double psi_log_mean = s.psi_log_mean(j);
    bound += priors.a * std::log(priors.b) - log_gamma(priors.a) + (priors.a - 1.0) * psi_log_mean
             - priors.b * psi_mean;
    bound -= s.psi_shape[j] * std::log(s.psi_rate[j]) - log_gamma(s.psi_shape[j])
             + (s.psi_shape[j] - 1.0) * psi_log_mean - s.psi_rate[j] * psi_mean;

    if (is_t_family(s.family))
      bound -= std::log(static_cast<double>(priors.nu_max));
  }
  return bound;
}

//! Drop ARD-silenced loading columns: a column is removed when the
//! posterior mean of 1/tau_jl falls below prune_epsilon.  Returns the
//! number of columns removed.  Caches are rebuilt by the next sweep.
inline int prune_factor_columns(FactorState& s, const PriorConfig& priors)
{
  const double tau_shape = priors.a + 0.5 * s.d;
  int removed = 0;
  for (int j = 0; j < s.n_components(); ++j) {
    std::vector<int> keep;
    for (int l = 0; l < s.k[j]; ++l) {
      const double inv_tau_mean = s.tau_rate[j][l] / (tau_shape - 1.0);
      if (inv_tau_mean >= priors.prune_epsilon)
        keep.push_back(l);
      else
        ++removed;
    }
    if (static_cast<int>(keep.size()) == s.k[j])
      continue;
    const int kept = static_cast<int>(keep.size());
    Eigen::MatrixXd lm(s.d, kept);
    Eigen::VectorXd lv(kept), tr(kept);
    Eigen::MatrixXd zm(s.n, kept);
    for (int t = 0; t < kept; ++t) {
      lm.col(t) = s.lambda_mean[j].col(keep[t]);
      lv[t] = s.lambda_var[j][keep[t]];
      tr[t] = s.tau_rate[j][keep[t]];
      zm.col(t) = s.z_mean[j].col(keep[t]);
    }
    s.lambda_mean[j] = lm;
    s.lambda_var[j] = lv;
    s.tau_rate[j] = tr;
    s.z_mean[j] = zm;
    s.k[j] = kept;
  }
  return removed;
}

} // namespace ctdens::vb
