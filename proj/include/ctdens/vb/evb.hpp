#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/rng.hpp"
#include "ctdens/vb/factor.hpp"
#include "ctdens/vb/family.hpp"
#include "ctdens/vb/full_scale.hpp"
#include "ctdens/vb/kmeans.hpp"
#include "ctdens/vb/model.hpp"

namespace ctdens::vb {

struct VbFit {
  MixtureModel model;
  double elbo = -std::numeric_limits<double>::infinity();
  std::vector<SweepRecord> trace;
};

namespace detail {

inline Eigen::MatrixXd one_hot(const std::vector<int>& labels, int K)
{
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(labels.size(), K);
  for (std::size_t i = 0; i < labels.size(); ++i)
    resp(static_cast<int>(i), labels[i]) = 1.0;
  return resp;
}

inline FullScaleState init_full_scale(const Eigen::MatrixXd& x, Family family, int K,
                                      const PriorConfig& priors, const FitOptions& opts)
{
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  const std::vector<int> labels = kmeans_labels(x, K, derive_seed(opts.seed, 1), opts.kmeans_iters);
  K = 1 + *std::max_element(labels.begin(), labels.end());

  FullScaleState s;
  s.family = family;
  s.n = n;
  s.d = d;
  s.resp = one_hot(labels, K);
  s.alpha = Eigen::VectorXd::Constant(K, priors.alpha0) + s.resp.colwise().sum().transpose();
  s.kappa.resize(K);
  s.tau.resize(K);
  s.mu.resize(K);
  s.mu_cov.resize(K);
  s.w_mean = Eigen::MatrixXd::Ones(n, K);
  s.w_log_mean = Eigen::MatrixXd::Zero(n, K);
  s.w_rate = Eigen::MatrixXd::Ones(n, K);
  if (is_t_family(family))
    s.nu.assign(K, std::min(20, priors.nu_max));
  const double tau0 = priors.resolve_tau0(d);
  for (int j = 0; j < K; ++j) {
    const double count = s.resp.col(j).sum();
    s.kappa[j] = priors.kappa0 + count;
    s.tau[j] = tau0 + 1.0 + count;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i)
      if (labels[i] == j)
        mean += x.row(i).transpose();
    mean /= std::max(count, 1.0);
    s.mu[j] = mean;
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Identity(d, d) * priors.sigma0;
    for (int i = 0; i < n; ++i)
      if (labels[i] == j) {
        const Eigen::VectorXd r = x.row(i).transpose() - mean;
        scatter += r * r.transpose();
      }
    s.sigma.emplace_back(scatter);
    s.mu_cov[j] = s.sigma.back().matrix() / (s.kappa[j] * s.tau[j]);
  }
  return s;
}

inline FactorState init_factor(const Eigen::MatrixXd& x, Family family, int K,
                               const PriorConfig& priors, const FitOptions& opts)
{
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  const std::vector<int> labels = kmeans_labels(x, K, derive_seed(opts.seed, 1), opts.kmeans_iters);
  K = 1 + *std::max_element(labels.begin(), labels.end());
  const int k0 = factor_dim_max(d);

  FactorState s;
  s.family = family;
  s.n = n;
  s.d = d;
  s.k.assign(K, k0);
  s.resp = one_hot(labels, K);
  s.alpha = Eigen::VectorXd::Constant(K, priors.alpha0) + s.resp.colwise().sum().transpose();
  s.mu_mean.resize(K);
  s.mu_var = Eigen::VectorXd::Constant(K, 1e-2);
  s.lambda_mean.resize(K);
  s.lambda_var.resize(K);
  s.tau_rate.resize(K);
  s.psi_shape.resize(K);
  s.psi_rate.resize(K);
  if (is_t_family(family))
    s.nu.assign(K, std::min(20, priors.nu_max));
  s.z_mean.resize(K);
  s.m_mat.resize(K);
  s.m_logdet.assign(K, 0.0);
  s.m_trace.assign(K, 0.0);
  s.ltl.resize(K);
  s.tr_m_ltl.assign(K, 0.0);
  s.w_at_z = Eigen::MatrixXd::Ones(n, K);
  s.w_mean = Eigen::MatrixXd::Ones(n, K);
  s.w_log_mean = Eigen::MatrixXd::Zero(n, K);
  s.w_rate = Eigen::MatrixXd::Ones(n, K);
  s.c = Eigen::MatrixXd::Zero(n, K);
  for (int j = 0; j < K; ++j) {
    const double count = s.resp.col(j).sum();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i)
      if (labels[i] == j)
        mean += x.row(i).transpose();
    mean /= std::max(count, 1.0);
    s.mu_mean[j] = mean;
    Rng rng(derive_seed(opts.seed, 100 + j));
    s.lambda_mean[j].resize(d, k0);
    for (int c = 0; c < k0; ++c)
      for (int r = 0; r < d; ++r)
        s.lambda_mean[j](r, c) = 0.1 * rng.normal();
    s.lambda_var[j] = Eigen::VectorXd::Constant(k0, 1e-2);
    s.tau_rate[j] = Eigen::VectorXd::Constant(k0, priors.a + 0.5 * d);
    s.psi_shape[j] = priors.a + 0.5 * d * count;
    s.psi_rate[j] = s.psi_shape[j];
    s.z_mean[j] = Eigen::MatrixXd::Zero(n, k0);
    s.m_mat[j] = Eigen::MatrixXd::Identity(k0, k0);
    s.m_trace[j] = k0;
    s.ltl[j] = Eigen::MatrixXd::Zero(k0, k0);
  }
  return s;
}

inline void sweep_state(FullScaleState& s, const Eigen::MatrixXd& x, const PriorConfig& priors)
{
  vb_sweep_full_scale(s, x, priors);
  s.elbo = elbo_full_scale(s, priors);
}

inline void sweep_state(FactorState& s, const Eigen::MatrixXd& x, const PriorConfig& priors)
{
  vb_sweep_factor(s, x, priors);
  s.elbo = elbo_factor(s, priors);
}

inline double param_delta(const FullScaleState& before, const FullScaleState& after)
{
  double delta = 0.0;
  for (int j = 0; j < after.n_components(); ++j) {
    delta = std::max(delta, (after.mu[j] - before.mu[j]).cwiseAbs().maxCoeff());
    delta = std::max(delta, (after.sigma[j].matrix() - before.sigma[j].matrix()).cwiseAbs().maxCoeff());
  }
  return delta;
}

inline double param_delta(const FactorState& before, const FactorState& after)
{
  double delta = 0.0;
  for (int j = 0; j < after.n_components(); ++j) {
    delta = std::max(delta, (after.mu_mean[j] - before.mu_mean[j]).cwiseAbs().maxCoeff());
    if (after.k[j] > 0 && after.k[j] == before.k[j])
      delta = std::max(delta,
                       (after.lambda_mean[j] - before.lambda_mean[j]).cwiseAbs().maxCoeff());
  }
  return delta;
}

inline void fill_trace_extras(const FullScaleState& s, SweepRecord& rec)
{
  if (is_t_family(s.family))
    rec.dofs = s.nu;
}

inline void fill_trace_extras(const FactorState& s, SweepRecord& rec)
{
  rec.factor_dims = s.k;
  if (is_t_family(s.family))
    rec.dofs = s.nu;
}

inline bool drop_starving(FactorState& s, double alpha0);

//! Run sweeps until the location/scale blocks move less than param_tol
//! in max norm, or the sweep budget is exhausted.  Factor components
//! whose occupancy collapses are culled between sweeps: the flat
//! location prior makes their variational subproblem diverge, so they
//! cannot be carried along.
template <typename State>
void converge_state(State& s, const Eigen::MatrixXd& x, const PriorConfig& priors,
                    const FitOptions& opts, std::vector<SweepRecord>& trace)
{
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const State before = s;
    sweep_state(s, x, priors);
    if constexpr (std::is_same_v<State, FactorState>) {
      if (drop_starving(s, priors.alpha0))
        s.elbo = elbo_factor(s, priors);
    }
    SweepRecord rec;
    rec.sweep = static_cast<int>(trace.size()) + 1;
    rec.elbo = s.elbo;
    rec.n_components = s.n_components();
    fill_trace_extras(s, rec);
    trace.push_back(std::move(rec));
    if (!std::isfinite(s.elbo)) {
      std::vector<double> elbos;
      for (const auto& r : trace)
        elbos.push_back(r.elbo);
      throw fit_error("vb fit diverged: non-finite ELBO", std::move(elbos));
    }
    if (s.n_components() != before.n_components())
      continue;
    if (param_delta(before, s) < opts.param_tol)
      break;
  }
}

inline void remove_component(FullScaleState& s, int j, double alpha0)
{
  const int K = s.n_components();
  auto drop_col = [&](Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), K - 1);
    out.leftCols(j) = m.leftCols(j);
    out.rightCols(K - 1 - j) = m.rightCols(K - 1 - j);
    m = std::move(out);
  };
  drop_col(s.resp);
  drop_col(s.w_mean);
  drop_col(s.w_log_mean);
  drop_col(s.w_rate);
  s.mu.erase(s.mu.begin() + j);
  s.mu_cov.erase(s.mu_cov.begin() + j);
  s.sigma.erase(s.sigma.begin() + j);
  auto drop_entry = [&](Eigen::VectorXd& v) {
    Eigen::VectorXd out(K - 1);
    out.head(j) = v.head(j);
    out.tail(K - 1 - j) = v.tail(K - 1 - j);
    v = std::move(out);
  };
  drop_entry(s.alpha);
  drop_entry(s.kappa);
  drop_entry(s.tau);
  if (!s.nu.empty())
    s.nu.erase(s.nu.begin() + j);
  for (int i = 0; i < s.n; ++i) {
    const double total = s.resp.row(i).sum();
    if (total > 1e-300)
      s.resp.row(i) /= total;
    else
      s.resp.row(i).setConstant(1.0 / (K - 1));
  }
  s.alpha = Eigen::VectorXd::Constant(K - 1, alpha0) + s.resp.colwise().sum().transpose();
}

inline void remove_component(FactorState& s, int j, double alpha0)
{
  const int K = s.n_components();
  auto drop_col = [&](Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), K - 1);
    out.leftCols(j) = m.leftCols(j);
    out.rightCols(K - 1 - j) = m.rightCols(K - 1 - j);
    m = std::move(out);
  };
  drop_col(s.resp);
  drop_col(s.w_mean);
  drop_col(s.w_log_mean);
  drop_col(s.w_rate);
  drop_col(s.w_at_z);
  drop_col(s.c);
  auto drop_entry = [&](Eigen::VectorXd& v) {
    Eigen::VectorXd out(K - 1);
    out.head(j) = v.head(j);
    out.tail(K - 1 - j) = v.tail(K - 1 - j);
    v = std::move(out);
  };
  drop_entry(s.alpha);
  drop_entry(s.mu_var);
  drop_entry(s.psi_shape);
  drop_entry(s.psi_rate);
  s.k.erase(s.k.begin() + j);
  s.mu_mean.erase(s.mu_mean.begin() + j);
  s.lambda_mean.erase(s.lambda_mean.begin() + j);
  s.lambda_var.erase(s.lambda_var.begin() + j);
  s.tau_rate.erase(s.tau_rate.begin() + j);
  s.z_mean.erase(s.z_mean.begin() + j);
  s.m_mat.erase(s.m_mat.begin() + j);
  s.m_logdet.erase(s.m_logdet.begin() + j);
  s.m_trace.erase(s.m_trace.begin() + j);
  s.ltl.erase(s.ltl.begin() + j);
  s.tr_m_ltl.erase(s.tr_m_ltl.begin() + j);
  if (!s.nu.empty())
    s.nu.erase(s.nu.begin() + j);
  for (int i = 0; i < s.n; ++i) {
    const double total = s.resp.row(i).sum();
    if (total > 1e-300)
      s.resp.row(i) /= total;
    else
      s.resp.row(i).setConstant(1.0 / (K - 1));
  }
  s.alpha = Eigen::VectorXd::Constant(K - 1, alpha0) + s.resp.colwise().sum().transpose();
}

//! Occupancy below this is numerical starvation, not a small cluster:
//! any component that is the top choice of even one observation has
//! occupancy bounded away from zero by 1/K.
inline constexpr double starving_occupancy = 1e-3;

//! Cull factor components whose occupancy has collapsed.  Returns
//! whether anything was removed; always leaves at least one component.
inline bool drop_starving(FactorState& s, double alpha0)
{
  bool dropped = false;
  for (int j = s.n_components() - 1; j >= 0 && s.n_components() > 1; --j)
    if (s.resp.col(j).sum() < starving_occupancy) {
      remove_component(s, j, alpha0);
      dropped = true;
    }
  return dropped;
}

//! Component-elimination loop: repeatedly propose removing the
//! lowest-occupancy component, re-converge, keep iff the converged
//! ELBO improves.  Returns the number of accepted removals.
template <typename State>
int evb_eliminate(State& s, const Eigen::MatrixXd& x, const PriorConfig& priors,
                  const FitOptions& opts, std::vector<SweepRecord>& trace)
{
  int accepted = 0;
  while (s.n_components() > 1) {
    const Eigen::VectorXd occupancy = s.resp.colwise().sum().transpose();
    int lowest = 0;
    occupancy.minCoeff(&lowest);
    State candidate = s;
    remove_component(candidate, lowest, priors.alpha0);
    converge_state(candidate, x, priors, opts, trace);
    if (candidate.elbo > s.elbo) {
      s = std::move(candidate);
      ++accepted;
    } else {
      break;
    }
  }
  return accepted;
}

inline MixtureModel extract_model(const FullScaleState& s, Standardization record)
{
  MixtureModel m;
  m.family = s.family;
  m.dim = s.d;
  const double alpha_sum = s.alpha.sum();
  for (int j = 0; j < s.n_components(); ++j) {
    m.weights.push_back(s.alpha[j] / alpha_sum);
    m.locations.push_back(s.mu[j]);
    m.scales.push_back(s.sigma[j].matrix() / s.tau[j]);
  }
  if (is_t_family(s.family))
    m.dof = s.nu;
  m.standardization = std::move(record);
  return m;
}

inline MixtureModel extract_model(const FactorState& s, Standardization record)
{
  MixtureModel m;
  m.family = s.family;
  m.dim = s.d;
  const double alpha_sum = s.alpha.sum();
  for (int j = 0; j < s.n_components(); ++j) {
    m.weights.push_back(s.alpha[j] / alpha_sum);
    m.locations.push_back(s.mu_mean[j]);
    m.loadings.push_back(s.lambda_mean[j]);
    m.noise_precision.push_back(s.psi_mean(j));
  }
  if (is_t_family(s.family))
    m.dof = s.nu;
  m.standardization = std::move(record);
  return m;
}

//! Full fit schedule on standardized data: converge and eliminate
//! components; factor families then alternate ARD factor pruning with
//! further elimination until a prune pass removes nothing.
template <typename State>
VbFit run_schedule(State s, const Eigen::MatrixXd& x, const Standardization& record,
                   const PriorConfig& priors, const FitOptions& opts)
{
  std::vector<SweepRecord> trace;
  converge_state(s, x, priors, opts, trace);
  evb_eliminate(s, x, priors, opts, trace);
  if constexpr (std::is_same_v<State, FactorState>) {
    for (int cycle = 0; cycle < opts.max_evb_cycles; ++cycle) {
      if (prune_factor_columns(s, priors) == 0)
        break;
      converge_state(s, x, priors, opts, trace);
      evb_eliminate(s, x, priors, opts, trace);
    }
  }
  VbFit fit;
  fit.model = extract_model(s, record);
  fit.elbo = s.elbo;
  fit.trace = std::move(trace);
  return fit;
}

} // namespace detail

//! Fit a mixture by variational Bayes with component elimination.
//! Standardizes the data internally; the returned model maps back to
//! the original units.
inline VbFit evb_fit(const Eigen::MatrixXd& data, Family family, const PriorConfig& priors = {},
                     const FitOptions& opts = {})
{
  if (data.rows() < 2)
    throw data_error("evb_fit: need at least two observations");
  if (data.cols() < 1)
    throw data_error("evb_fit: need at least one variable");
  auto [x, record] = standardize_columns(data);
  const int K = std::max(1, std::min<int>(opts.k_init, static_cast<int>(x.rows())));
  if (is_factor_family(family)) {
    auto s = detail::init_factor(x, family, K, priors, opts);
    return detail::run_schedule(std::move(s), x, record, priors, opts);
  }
  auto s = detail::init_full_scale(x, family, K, priors, opts);
  return detail::run_schedule(std::move(s), x, record, priors, opts);
}

} // namespace ctdens::vb
