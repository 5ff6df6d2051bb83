#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/eval/dgp.hpp"
#include "ctdens/eval/estimator.hpp"
#include "ctdens/marginals/select.hpp"

namespace ctdens {

//! Mean negative log predictive density over a test set.  Rows where
//! the log density is non-finite are listed; the value is NaN when any
//! exist.
struct LpdsResult {
  double value = 0.0;
  std::vector<int> nonfinite_rows;
};

inline LpdsResult lpds(const DensityEstimate& estimate, const Eigen::MatrixXd& test)
{
  LpdsResult out;
  double acc = 0.0;
  for (int i = 0; i < test.rows(); ++i) {
    const double lp = estimate.log_pdf(test.row(i).transpose());
    if (!std::isfinite(lp))
      out.nonfinite_rows.push_back(i);
    acc -= lp;
  }
  out.value = out.nonfinite_rows.empty() ? acc / test.rows()
                                         : std::numeric_limits<double>::quiet_NaN();
  return out;
}

struct CvResult {
  double lpds = 0.0;           // pooled mean negative log density
  double mean_seconds = 0.0;   // mean fit time per fold
  std::vector<double> fold_sums;
};

//! B-fold cross-validated LPDS: fit on each complement, score the held
//! out fold, pool over all n points.  The marginal plan is resolved per
//! training set inside fit_estimator.
inline CvResult cv_lpds(const Eigen::MatrixXd& data, EstimatorId id, const MarginalPlan& plan, int folds,
                        std::uint64_t seed, const CtOptions& opts = {})
{
  const int n = static_cast<int>(data.rows());
  const auto parts = cv_folds(n, folds, derive_seed(seed, 23));
  CvResult out;
  double total = 0.0;
  double seconds = 0.0;
  for (const auto& test_rows : parts) {
    std::vector<char> in_test(n, 0);
    for (int r : test_rows)
      in_test[r] = 1;
    std::vector<int> train_rows;
    for (int r = 0; r < n; ++r)
      if (!in_test[r])
        train_rows.push_back(r);
    const Eigen::MatrixXd train = detail::take_rows(data, train_rows);
    const auto t0 = std::chrono::steady_clock::now();
    const DensityEstimate est = fit_estimator(train, id, plan, opts);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double fold_sum = 0.0;
    for (int r : test_rows)
      fold_sum -= est.log_pdf(data.row(r).transpose());
    out.fold_sums.push_back(fold_sum);
    total += fold_sum;
  }
  out.lpds = total / n;
  out.mean_seconds = seconds / folds;
  return out;
}

//! One result line of a comparison run.
struct ComparisonRow {
  EstimatorId id = EstimatorId::mn;
  double mean_lpds = 0.0;
  double sd_lpds = 0.0;
  double mean_seconds = 0.0;
  int n = 0;
  int d = 0;
  int folds = 0;
  std::uint64_t seed = 0;
  std::vector<double> rep_values;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& v)
{
  const int n = static_cast<int>(v.size());
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= n;
  if (n < 2)
    return {mean, 0.0};
  double ss = 0.0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1))};
}

} // namespace detail

//! Repeated train/test comparison on simulated data with the true
//! parametric marginals supplied to the copula estimators.
inline std::vector<ComparisonRow> run_comparison_simulated(const Dgp& dgp, int n_train, int n_test,
                                                           int reps,
                                                           const std::vector<EstimatorId>& estimators,
                                                           std::uint64_t seed, const CtOptions& opts = {})
{
  const MarginalPlan plan = MarginalPlan::from_models(dgp.data_marginals());
  std::vector<std::vector<double>> values(estimators.size());
  std::vector<std::vector<double>> times(estimators.size());
  for (int rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXd train = dgp.simulate(n_train, derive_seed(seed, 100 + rep));
    const Eigen::MatrixXd test = dgp.simulate(n_test, derive_seed(seed, 10000 + rep));
    CtOptions rep_opts = opts;
    rep_opts.vb_opts.seed = derive_seed(seed, 20000 + rep);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const auto t0 = std::chrono::steady_clock::now();
      const DensityEstimate est = fit_estimator(train, estimators[e], plan, rep_opts);
      times[e].push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      values[e].push_back(lpds(est, test).value);
    }
  }
  std::vector<ComparisonRow> rows;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    const auto [mean, sd] = detail::mean_sd(values[e]);
    const auto [tmean, tsd] = detail::mean_sd(times[e]);
    rows.push_back({estimators[e], mean, sd, tmean, n_train, dgp.dim(), 0, seed, values[e]});
  }
  return rows;
}

//! Repeated cross-validated comparison on a fixed data set.  Marginal
//! classes for the copula estimators are selected once on the full data
//! by cross-validated score, then refit per training set.  Replications
//! vary the fold partition through the seed.
inline std::vector<ComparisonRow> run_comparison_cv(const Eigen::MatrixXd& data,
                                                    const std::vector<EstimatorId>& estimators,
                                                    int folds, int reps, std::uint64_t seed,
                                                    const CtOptions& opts = {},
                                                    int marginal_folds = 10)
{
  const int d = static_cast<int>(data.cols());
  bool any_copula = false;
  for (EstimatorId id : estimators)
    any_copula = any_copula || !is_mixture_estimator(id);
  MarginalPlan plan;
  if (any_copula) {
    const std::vector<MarginalKind> candidates = {
        MarginalKind::kernel, MarginalKind::univ_mix_normal, MarginalKind::univ_mix_t,
        MarginalKind::implied_mix_normal, MarginalKind::implied_mix_t};
    vb::FitOptions sel_opts = opts.vb_opts;
    sel_opts.seed = derive_seed(seed, 31);
    const MarginalSelection sel =
        select_marginals(data, candidates, marginal_folds, derive_seed(seed, 37), opts.priors, sel_opts);
    plan = MarginalPlan::from_classes(sel.winners);
  }
  std::vector<std::vector<double>> values(estimators.size());
  std::vector<std::vector<double>> times(estimators.size());
  for (int rep = 0; rep < reps; ++rep) {
    CtOptions rep_opts = opts;
    rep_opts.vb_opts.seed = derive_seed(seed, 40000 + rep);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const CvResult cv =
          cv_lpds(data, estimators[e], plan, folds, derive_seed(seed, 50000 + rep), rep_opts);
      values[e].push_back(cv.lpds);
      times[e].push_back(cv.mean_seconds);
    }
  }
  std::vector<ComparisonRow> rows;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    const auto [mean, sd] = detail::mean_sd(values[e]);
    const auto [tmean, tsd] = detail::mean_sd(times[e]);
    rows.push_back({estimators[e], mean, sd, tmean, static_cast<int>(data.rows()), d, folds, seed,
                    values[e]});
  }
  return rows;
}

} // namespace ctdens
