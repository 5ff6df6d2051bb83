#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/marginals/marginal.hpp"
#include "ctdens/rng.hpp"
#include "ctdens/vb/evb.hpp"

namespace ctdens {

//! Fit a univariate normal or t mixture by the variational engine with
//! component elimination; returns the mixture in original units.
inline MarginalModel fit_univ_mixture(const Eigen::VectorXd& samples, bool t_components,
                                      const vb::PriorConfig& priors = {}, const vb::FitOptions& opts = {})
{
  Eigen::MatrixXd column(samples.size(), 1);
  column.col(0) = samples;
  const vb::VbFit fit = vb::evb_fit(column, t_components ? vb::Family::mt : vb::Family::mn, priors, opts);
  const vb::MixtureModel& m = fit.model;
  std::vector<double> w, loc, sc, dofs;
  const double shift = m.standardization.shift[0];
  const double scale = m.standardization.scale[0];
  for (int j = 0; j < m.n_components(); ++j) {
    w.push_back(m.weights[j]);
    loc.push_back(shift + scale * m.locations[j][0]);
    sc.push_back(scale * std::sqrt(m.scales[j](0, 0)));
    if (t_components)
      dofs.push_back(static_cast<double>(m.dof[j]));
  }
  return MarginalModel::mixture(t_components ? MarginalKind::univ_mix_t : MarginalKind::univ_mix_normal,
                                std::move(w), std::move(loc), std::move(sc), std::move(dofs));
}

//! Seeded permutation split into `folds` contiguous blocks; the same
//! partition must be reused across candidates for a fair comparison.
inline std::vector<std::vector<int>> cv_folds(int n, int folds, std::uint64_t seed)
{
  if (folds < 2 || folds > n)
    throw std::invalid_argument("cv_folds: need 2 <= folds <= n");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i)
    order[i] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<int>> out(folds);
  const int base = n / folds;
  const int extra = n % folds;
  int pos = 0;
  for (int f = 0; f < folds; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    out[f].assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return out;
}

struct CandidateScore {
  MarginalKind kind = MarginalKind::kernel;
  double cv_lpds = std::numeric_limits<double>::infinity();
};

struct MarginalSelection {
  std::vector<MarginalModel> models;            // winner per column, refit on all data
  std::vector<MarginalKind> winners;            // per column
  std::vector<std::vector<CandidateScore>> table; // per column, candidate order preserved
};

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows)
{
  Eigen::MatrixXd out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<int>(i)) = x.row(rows[i]);
  return out;
}

inline bool is_implied_kind(MarginalKind k)
{
  return k == MarginalKind::implied_mix_normal || k == MarginalKind::implied_mix_t;
}

//! Fit one candidate class for one column on the given training rows.
//! Implied kinds consult the cache of joint fits shared across columns.
inline MarginalModel fit_candidate(MarginalKind kind, const Eigen::MatrixXd& train, int column,
                                   std::map<vb::Family, vb::MixtureModel>& joint_cache,
                                   const vb::PriorConfig& priors, const vb::FitOptions& opts)
{
  switch (kind) {
    case MarginalKind::kernel:
      return MarginalModel::kernel(train.col(column));
    case MarginalKind::univ_mix_normal:
      return fit_univ_mixture(train.col(column), false, priors, opts);
    case MarginalKind::univ_mix_t:
      return fit_univ_mixture(train.col(column), true, priors, opts);
    case MarginalKind::implied_mix_normal:
    case MarginalKind::implied_mix_t: {
      const vb::Family family =
          kind == MarginalKind::implied_mix_normal ? vb::Family::mn : vb::Family::mt;
      auto it = joint_cache.find(family);
      if (it == joint_cache.end())
        it = joint_cache.emplace(family, vb::evb_fit(train, family, priors, opts).model).first;
      return MarginalModel::implied(it->second, column);
    }
  }
  throw std::invalid_argument("fit_candidate: unknown kind");
}

} // namespace detail

//! Select a marginal class per column by B-fold cross-validated mean
//! negative log density.  One shared fold partition; joint fits behind
//! the implied candidates are shared across columns within a fold.
//! A candidate that fails on any fold scores +infinity.  Ties keep the
//! earliest candidate in declaration order; winners are refit on the
//! full data.
inline MarginalSelection select_marginals(const Eigen::MatrixXd& data,
                                          const std::vector<MarginalKind>& candidates, int folds,
                                          std::uint64_t seed, const vb::PriorConfig& priors = {},
                                          const vb::FitOptions& opts = {})
{
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (candidates.empty())
    throw std::invalid_argument("select_marginals: no candidates given");
  const auto folds_idx = cv_folds(n, folds, derive_seed(seed, 17));

  Eigen::MatrixXd score_sum = Eigen::MatrixXd::Zero(d, candidates.size());
  Eigen::MatrixXd failed = Eigen::MatrixXd::Zero(d, candidates.size());

  for (const auto& test_rows : folds_idx) {
    std::vector<int> train_rows;
    train_rows.reserve(n - test_rows.size());
    std::vector<char> in_test(n, 0);
    for (int r : test_rows)
      in_test[r] = 1;
    for (int r = 0; r < n; ++r)
      if (!in_test[r])
        train_rows.push_back(r);
    const Eigen::MatrixXd train = detail::take_rows(data, train_rows);
    std::map<vb::Family, vb::MixtureModel> joint_cache;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      for (int j = 0; j < d; ++j) {
        if (failed(j, c) > 0.0)
          continue;
        try {
          const MarginalModel m =
              detail::fit_candidate(candidates[c], train, j, joint_cache, priors, opts);
          double acc = 0.0;
          for (int r : test_rows)
            acc -= m.log_pdf(data(r, j));
          if (!std::isfinite(acc))
            failed(j, c) = 1.0;
          else
            score_sum(j, c) += acc;
        } catch (const std::exception&) {
          failed(j, c) = 1.0;
        }
      }
    }
  }

  MarginalSelection out;
  out.table.resize(d);
  std::map<vb::Family, vb::MixtureModel> full_cache;
  for (int j = 0; j < d; ++j) {
    int best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double score =
          failed(j, c) > 0.0 ? std::numeric_limits<double>::infinity() : score_sum(j, c) / n;
      out.table[j].push_back({candidates[c], score});
      if (score < best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    if (best < 0)
      throw fit_error("select_marginals: every candidate failed for column " + std::to_string(j));
    out.winners.push_back(candidates[best]);
    out.models.push_back(detail::fit_candidate(candidates[best], data, j, full_cache, priors, opts));
  }
  return out;
}

//! Single-column form of the selection; `joint_data` supplies the full
//! data matrix required by the implied candidates (`column` names the
//! coordinate `samples` came from).
inline MarginalSelection select_marginal(const Eigen::VectorXd& samples,
                                         const std::vector<MarginalKind>& candidates, int folds,
                                         std::uint64_t seed,
                                         const std::optional<Eigen::MatrixXd>& joint_data = std::nullopt,
                                         int column = 0, const vb::PriorConfig& priors = {},
                                         const vb::FitOptions& opts = {})
{
  for (MarginalKind k : candidates)
    if (detail::is_implied_kind(k) && !joint_data)
      throw std::invalid_argument("select_marginal: implied candidates need the joint data");
  if (joint_data) {
    if (joint_data->rows() != samples.size())
      throw std::invalid_argument("select_marginal: joint data row count mismatch");
    MarginalSelection all = select_marginals(*joint_data, candidates, folds, seed, priors, opts);
    MarginalSelection out;
    out.models.push_back(all.models[column]);
    out.winners.push_back(all.winners[column]);
    out.table.push_back(all.table[column]);
    return out;
  }
  Eigen::MatrixXd one(samples.size(), 1);
  one.col(0) = samples;
  return select_marginals(one, candidates, folds, seed, priors, opts);
}

} // namespace ctdens
