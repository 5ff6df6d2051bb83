#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/marginals/marginal.hpp"
#include "ctdens/rng.hpp"
#include "ctdens/vb/evb.hpp"
#include "ctdens/vb/model.hpp"

namespace ctdens {

//! Map data to the unit cube through the fitted marginal cdfs:
//! u_ij = F_j(y_ij), clamped away from {0, 1}.
inline Eigen::MatrixXd to_u_space(const Eigen::MatrixXd& y, const std::vector<MarginalModel>& marginals)
{
  if (static_cast<int>(marginals.size()) != y.cols())
    throw std::invalid_argument("to_u_space: one marginal per column required");
  Eigen::MatrixXd u(y.rows(), y.cols());
  for (int j = 0; j < y.cols(); ++j)
    for (int i = 0; i < y.rows(); ++i)
      u(i, j) = clamp_probability(marginals[j].cdf(y(i, j)));
  return u;
}

//! Map unit-cube data to the working space through the working marginal
//! quantiles: x_ij = H_j^{-1}(u_ij).
inline Eigen::MatrixXd to_x_space(const Eigen::MatrixXd& u, const std::vector<MarginalModel>& working)
{
  if (static_cast<int>(working.size()) != u.cols())
    throw std::invalid_argument("to_x_space: one working marginal per column required");
  Eigen::MatrixXd x(u.rows(), u.cols());
  for (int j = 0; j < u.cols(); ++j)
    for (int i = 0; i < u.rows(); ++i)
      x(i, j) = working[j].quantile(u(i, j));
  return x;
}

struct IterationRecord {
  int iteration = 0;
  double loglik = 0.0;
  int n_components = 0;
};

//! Copula-type density estimate: marginal models F_j, working marginals
//! H_j, and a joint mixture fitted in the working space.  The density is
//! the working-space mixture carried back through the marginal
//! transforms.
struct CopulaTypeModel {
  vb::Family family = vb::Family::mn;
  std::vector<MarginalModel> marginals;
  std::vector<MarginalModel> working;
  vb::MixtureModel joint;
  std::vector<IterationRecord> iterations;

  int dim() const { return static_cast<int>(marginals.size()); }
};

//! Log density of the copula-type estimate at y:
//! log g(x) + sum_j [log f_j(y_j) - log h_j(x_j)] with x_j = H_j^{-1}(F_j(y_j)).
inline double ct_logpdf(const CopulaTypeModel& model, const Eigen::VectorXd& y)
{
  const int d = model.dim();
  if (y.size() != d)
    throw std::invalid_argument("ct_logpdf: dimension mismatch");
  Eigen::VectorXd x(d);
  double marginal_part = 0.0;
  for (int j = 0; j < d; ++j) {
    const double u = clamp_probability(model.marginals[j].cdf(y[j]));
    x[j] = model.working[j].quantile(u);
    marginal_part += model.marginals[j].log_pdf(y[j]) - model.working[j].log_pdf(x[j]);
  }
  return vb::mixture_logpdf(model.joint, x) + marginal_part;
}

//! Log density of the j-th coordinate marginal of the copula-type
//! estimate: the implied joint marginal reweighted by f_j / h_j.
inline double ct_marginal_logpdf(const CopulaTypeModel& model, int column, double y)
{
  const double u = clamp_probability(model.marginals[column].cdf(y));
  const double x = model.working[column].quantile(u);
  const MarginalModel implied = MarginalModel::implied(model.joint, column);
  return implied.log_pdf(x) + model.marginals[column].log_pdf(y)
         - model.working[column].log_pdf(x);
}

//! Exact-copula variant: the working marginals are the implied
//! marginals of the joint itself, so the estimate's coordinate
//! marginals reproduce F_j exactly.
inline CopulaTypeModel exact_copula_model(vb::MixtureModel joint, std::vector<MarginalModel> marginals)
{
  CopulaTypeModel model;
  model.family = joint.family;
  model.marginals = std::move(marginals);
  for (int j = 0; j < joint.dim; ++j)
    model.working.push_back(MarginalModel::implied(joint, j));
  model.joint = std::move(joint);
  return model;
}

struct CtInit {
  //! Working marginals for the first iteration; when empty, the implied
  //! marginals of a direct mixture fit on the data are used.
  std::vector<MarginalModel> working;
};

struct CtOptions {
  vb::PriorConfig priors;
  vb::FitOptions vb_opts;
  int max_iterations = 30;
  int patience = 1; // stop after this many non-improving iterations
};

//! Iterate working-marginal updates: transform to the working space,
//! fit the joint mixture, replace each H_j by the implied marginal of
//! the fit, and repeat while the training log likelihood improves.
//! Returns the iterate with the best training log likelihood.
//! `loglik_offset` is the data-marginal part sum_ij log f_j(y_ij), a
//! constant across iterations, added so the records report the full
//! training log likelihood.
inline CopulaTypeModel iterative_fit(const Eigen::MatrixXd& u, vb::Family family,
                                     std::vector<MarginalModel> data_marginals,
                                     std::vector<MarginalModel> working0, const CtOptions& opts = {},
                                     double loglik_offset = 0.0)
{
  const int n = static_cast<int>(u.rows());
  const int d = static_cast<int>(u.cols());
  if (static_cast<int>(working0.size()) != d)
    throw std::invalid_argument("iterative_fit: one initial working marginal per column required");

  CopulaTypeModel best;
  best.family = family;
  best.marginals = std::move(data_marginals);
  double best_loglik = -std::numeric_limits<double>::infinity();
  std::vector<IterationRecord> records;
  std::vector<MarginalModel> working = std::move(working0);
  int bad_iterations = 0;

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    const Eigen::MatrixXd x = to_x_space(u, working);
    vb::FitOptions vb_opts = opts.vb_opts;
    vb_opts.seed = derive_seed(opts.vb_opts.seed, 1000 + iter);
    const vb::VbFit fit = vb::evb_fit(x, family, opts.priors, vb_opts);

    double loglik = loglik_offset;
    for (int i = 0; i < n; ++i)
      loglik += vb::mixture_logpdf(fit.model, x.row(i).transpose());
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i)
        loglik -= working[j].log_pdf(x(i, j));

    records.push_back({iter, loglik, fit.model.n_components()});
    if (loglik > best_loglik) {
      best_loglik = loglik;
      best.joint = fit.model;
      best.working = working;
      bad_iterations = 0;
    } else if (++bad_iterations >= opts.patience) {
      break;
    }
    working.clear();
    for (int j = 0; j < d; ++j)
      working.push_back(MarginalModel::implied(fit.model, j));
  }
  best.iterations = std::move(records);
  return best;
}

enum class CtWorkingInit { implied_direct, standard_normal };

//! Fit the copula-type estimator end to end: transform through the
//! data marginals, initialize the working marginals, and run the
//! iterative scheme.
inline CopulaTypeModel fit_copula_type(const Eigen::MatrixXd& y, std::vector<MarginalModel> marginals,
                                       vb::Family family, const CtOptions& opts = {},
                                       CtWorkingInit init = CtWorkingInit::implied_direct)
{
  const int d = static_cast<int>(y.cols());
  if (static_cast<int>(marginals.size()) != d)
    throw std::invalid_argument("fit_copula_type: one marginal per column required");

  const Eigen::MatrixXd u = to_u_space(y, marginals);
  double offset = 0.0;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < y.rows(); ++i)
      offset += marginals[j].log_pdf(y(i, j));

  std::vector<MarginalModel> working0;
  if (init == CtWorkingInit::standard_normal) {
    for (int j = 0; j < d; ++j)
      working0.push_back(MarginalModel::normal(0.0, 1.0));
  } else {
    vb::FitOptions vb_opts = opts.vb_opts;
    vb_opts.seed = derive_seed(opts.vb_opts.seed, 999);
    const vb::VbFit direct = vb::evb_fit(y, family, opts.priors, vb_opts);
    for (int j = 0; j < d; ++j)
      working0.push_back(MarginalModel::implied(direct.model, j));
  }
  return iterative_fit(u, family, std::move(marginals), std::move(working0), opts, offset);
}

} // namespace ctdens
