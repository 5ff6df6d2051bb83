#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/copula/copula.hpp"
#include "ctdens/copula/parametric.hpp"
#include "ctdens/marginals/select.hpp"
#include "ctdens/vb/evb.hpp"

namespace ctdens {

//! Density estimators compared in the experiments: direct mixtures,
//! parametric copulas, and copula-type estimators per mixture family.
enum class EstimatorId { mn, mt, mfa, mtfa, nc, tc, ct_mn, ct_mt, ct_mfa, ct_mtfa };

inline const std::vector<std::pair<EstimatorId, std::string>>& estimator_names()
{
  static const std::vector<std::pair<EstimatorId, std::string>> table = {
      {EstimatorId::mn, "mn"},       {EstimatorId::mt, "mt"},       {EstimatorId::mfa, "mfa"},
      {EstimatorId::mtfa, "mtfa"},   {EstimatorId::nc, "nc"},       {EstimatorId::tc, "tc"},
      {EstimatorId::ct_mn, "ct-mn"}, {EstimatorId::ct_mt, "ct-mt"}, {EstimatorId::ct_mfa, "ct-mfa"},
      {EstimatorId::ct_mtfa, "ct-mtfa"},
  };
  return table;
}

inline std::string estimator_name(EstimatorId id)
{
  for (const auto& [eid, name] : estimator_names())
    if (eid == id)
      return name;
  throw std::invalid_argument("estimator_name: unknown estimator");
}

inline EstimatorId estimator_from_name(const std::string& name)
{
  for (const auto& [eid, ename] : estimator_names())
    if (ename == name)
      return eid;
  throw std::invalid_argument("estimator_from_name: unknown estimator '" + name + "'");
}

inline bool is_mixture_estimator(EstimatorId id)
{
  return id == EstimatorId::mn || id == EstimatorId::mt || id == EstimatorId::mfa
         || id == EstimatorId::mtfa;
}

inline bool is_parametric_copula(EstimatorId id)
{
  return id == EstimatorId::nc || id == EstimatorId::tc;
}

inline bool is_copula_type(EstimatorId id)
{
  return id == EstimatorId::ct_mn || id == EstimatorId::ct_mt || id == EstimatorId::ct_mfa
         || id == EstimatorId::ct_mtfa;
}

//! Mixture family behind a mixture or copula-type estimator.
inline vb::Family estimator_family(EstimatorId id)
{
  switch (id) {
    case EstimatorId::mn:
    case EstimatorId::ct_mn: return vb::Family::mn;
    case EstimatorId::mt:
    case EstimatorId::ct_mt: return vb::Family::mt;
    case EstimatorId::mfa:
    case EstimatorId::ct_mfa: return vb::Family::mfa;
    case EstimatorId::mtfa:
    case EstimatorId::ct_mtfa: return vb::Family::mtfa;
    default: throw std::invalid_argument("estimator_family: not a mixture-backed estimator");
  }
}

//! Where copula estimators get their data marginals: fixed models used
//! as-is (e.g. the true parametric marginals of a simulation), or
//! per-column classes refitted on each training set.
struct MarginalPlan {
  std::vector<MarginalModel> fixed;
  std::vector<MarginalKind> classes;

  static MarginalPlan from_models(std::vector<MarginalModel> models)
  {
    MarginalPlan p;
    p.fixed = std::move(models);
    return p;
  }

  static MarginalPlan from_classes(std::vector<MarginalKind> kinds)
  {
    MarginalPlan p;
    p.classes = std::move(kinds);
    return p;
  }

  bool empty() const { return fixed.empty() && classes.empty(); }
};

//! Fitted density estimate of any estimator kind.
struct DensityEstimate {
  EstimatorId id = EstimatorId::mn;
  std::variant<vb::MixtureModel, CopulaTypeModel, ParametricCopulaModel> model;

  double log_pdf(const Eigen::VectorXd& y) const
  {
    if (const auto* m = std::get_if<vb::MixtureModel>(&model))
      return m->logpdf(y);
    if (const auto* m = std::get_if<CopulaTypeModel>(&model))
      return ct_logpdf(*m, y);
    return parametric_copula_logpdf(std::get<ParametricCopulaModel>(model), y);
  }
};

namespace detail {

//! Instantiate the plan's marginals for one training set.
inline std::vector<MarginalModel> resolve_marginals(const MarginalPlan& plan,
                                                    const Eigen::MatrixXd& train,
                                                    const vb::PriorConfig& priors,
                                                    const vb::FitOptions& opts)
{
  const int d = static_cast<int>(train.cols());
  if (!plan.fixed.empty()) {
    if (static_cast<int>(plan.fixed.size()) != d)
      throw std::invalid_argument("resolve_marginals: fixed marginal count mismatch");
    return plan.fixed;
  }
  if (static_cast<int>(plan.classes.size()) != d)
    throw std::invalid_argument("resolve_marginals: need one marginal class per column");
  std::map<vb::Family, vb::MixtureModel> cache;
  std::vector<MarginalModel> out;
  for (int j = 0; j < d; ++j)
    out.push_back(fit_candidate(plan.classes[j], train, j, cache, priors, opts));
  return out;
}

} // namespace detail

//! Fit one estimator on a training set.  Copula estimators draw their
//! data marginals from the plan; mixture estimators ignore it.
inline DensityEstimate fit_estimator(const Eigen::MatrixXd& train, EstimatorId id,
                                     const MarginalPlan& plan, const CtOptions& opts = {})
{
  DensityEstimate est;
  est.id = id;
  if (is_mixture_estimator(id)) {
    est.model = vb::evb_fit(train, estimator_family(id), opts.priors, opts.vb_opts).model;
    return est;
  }
  std::vector<MarginalModel> marginals =
      detail::resolve_marginals(plan, train, opts.priors, opts.vb_opts);
  if (is_parametric_copula(id)) {
    const Eigen::MatrixXd u = to_u_space(train, marginals);
    ParametricCopulaModel m = fit_parametric_copula(
        u, id == EstimatorId::nc ? CopulaKind::normal : CopulaKind::t, opts.priors.nu_max);
    m.marginals = std::move(marginals);
    est.model = std::move(m);
    return est;
  }
  est.model = fit_copula_type(train, std::move(marginals), estimator_family(id), opts);
  return est;
}

} // namespace ctdens
