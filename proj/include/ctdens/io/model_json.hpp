#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctdens/common.hpp"
#include "ctdens/copula/copula.hpp"
#include "ctdens/copula/parametric.hpp"
#include "ctdens/eval/estimator.hpp"
#include "ctdens/io/csv.hpp"
#include "ctdens/marginals/marginal.hpp"
#include "ctdens/vb/model.hpp"

namespace ctdens::io {

//! Models are stored as ordered JSON so serialization is byte-stable:
//! identical models always produce identical files.
using json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

namespace detail {

inline json vector_to_json(const Eigen::VectorXd& v)
{
  json out = json::array();
  for (int i = 0; i < v.size(); ++i)
    out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vector_from_json(const json& j)
{
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

inline json matrix_to_json(const Eigen::MatrixXd& m)
{
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j)
      row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, int cols_if_empty = 0)
{
  const int rows = static_cast<int>(j.size());
  if (rows == 0)
    return Eigen::MatrixXd(0, cols_if_empty);
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols)
      throw data_error("model json: ragged matrix");
    for (int c = 0; c < cols; ++c)
      m(r, c) = j[r][c].get<double>();
  }
  return m;
}

} // namespace detail

inline json marginal_to_json(const MarginalModel& m)
{
  json out;
  out["kind"] = marginal_kind_name(m.kind());
  if (m.kind() == MarginalKind::kernel) {
    out["points"] = detail::vector_to_json(m.kernel_points());
    out["bandwidth"] = m.kernel_bandwidth();
    return out;
  }
  out["weights"] = m.weights();
  out["locations"] = m.locations();
  out["scales"] = m.scales();
  if (m.is_t())
    out["dofs"] = m.dofs();
  return out;
}

inline MarginalModel marginal_from_json(const json& j)
{
  const MarginalKind kind = marginal_kind_from_name(j.at("kind").get<std::string>());
  if (kind == MarginalKind::kernel)
    return MarginalModel::kernel_with_bandwidth(detail::vector_from_json(j.at("points")),
                                                j.at("bandwidth").get<double>());
  std::vector<double> dofs;
  if (j.contains("dofs"))
    dofs = j.at("dofs").get<std::vector<double>>();
  return MarginalModel::mixture(kind, j.at("weights").get<std::vector<double>>(),
                                j.at("locations").get<std::vector<double>>(),
                                j.at("scales").get<std::vector<double>>(), std::move(dofs));
}

inline json mixture_to_json(const vb::MixtureModel& m)
{
  json out;
  out["type"] = "mixture";
  out["family"] = vb::family_name(m.family);
  out["dim"] = m.dim;
  out["weights"] = m.weights;
  json locations = json::array();
  for (const auto& loc : m.locations)
    locations.push_back(detail::vector_to_json(loc));
  out["locations"] = std::move(locations);
  if (vb::is_factor_family(m.family)) {
    json loadings = json::array();
    json dims = json::array();
    for (const auto& lam : m.loadings) {
      loadings.push_back(detail::matrix_to_json(lam));
      dims.push_back(static_cast<int>(lam.cols()));
    }
    out["loadings"] = std::move(loadings);
    out["factor_dims"] = std::move(dims);
    out["noise_precision"] = m.noise_precision;
  } else {
    json scales = json::array();
    for (const auto& s : m.scales)
      scales.push_back(detail::matrix_to_json(s));
    out["scales"] = std::move(scales);
  }
  if (vb::is_t_family(m.family))
    out["dof"] = m.dof;
  out["standardization"] = {{"shift", detail::vector_to_json(m.standardization.shift)},
                            {"scale", detail::vector_to_json(m.standardization.scale)}};
  return out;
}

inline vb::MixtureModel mixture_from_json(const json& j)
{
  vb::MixtureModel m;
  m.family = vb::family_from_name(j.at("family").get<std::string>());
  m.dim = j.at("dim").get<int>();
  m.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& loc : j.at("locations"))
    m.locations.push_back(detail::vector_from_json(loc));
  if (vb::is_factor_family(m.family)) {
    const auto& dims = j.at("factor_dims");
    std::size_t idx = 0;
    for (const auto& lam : j.at("loadings")) {
      const int k = dims[idx++].get<int>();
      Eigen::MatrixXd mat = detail::matrix_from_json(lam, k);
      if (mat.rows() == 0)
        mat.resize(m.dim, 0);
      m.loadings.push_back(std::move(mat));
    }
    m.noise_precision = j.at("noise_precision").get<std::vector<double>>();
  } else {
    for (const auto& s : j.at("scales"))
      m.scales.push_back(detail::matrix_from_json(s));
  }
  if (vb::is_t_family(m.family))
    m.dof = j.at("dof").get<std::vector<int>>();
  m.standardization.shift = detail::vector_from_json(j.at("standardization").at("shift"));
  m.standardization.scale = detail::vector_from_json(j.at("standardization").at("scale"));
  return m;
}

inline json copula_type_to_json(const CopulaTypeModel& m)
{
  json out;
  out["type"] = "copula-type";
  out["family"] = vb::family_name(m.family);
  json marginals = json::array();
  for (const auto& f : m.marginals)
    marginals.push_back(marginal_to_json(f));
  out["marginals"] = std::move(marginals);
  json working = json::array();
  for (const auto& h : m.working)
    working.push_back(marginal_to_json(h));
  out["working"] = std::move(working);
  out["joint"] = mixture_to_json(m.joint);
  json iterations = json::array();
  for (const auto& rec : m.iterations)
    iterations.push_back({{"iteration", rec.iteration},
                          {"loglik", rec.loglik},
                          {"n_components", rec.n_components}});
  out["iterations"] = std::move(iterations);
  return out;
}

inline CopulaTypeModel copula_type_from_json(const json& j)
{
  CopulaTypeModel m;
  m.family = vb::family_from_name(j.at("family").get<std::string>());
  for (const auto& f : j.at("marginals"))
    m.marginals.push_back(marginal_from_json(f));
  for (const auto& h : j.at("working"))
    m.working.push_back(marginal_from_json(h));
  m.joint = mixture_from_json(j.at("joint"));
  for (const auto& rec : j.at("iterations"))
    m.iterations.push_back({rec.at("iteration").get<int>(), rec.at("loglik").get<double>(),
                            rec.at("n_components").get<int>()});
  return m;
}

inline json parametric_copula_to_json(const ParametricCopulaModel& m)
{
  json out;
  out["type"] = "parametric-copula";
  out["kind"] = copula_kind_name(m.kind);
  out["correlation"] = detail::matrix_to_json(m.correlation);
  if (m.kind == CopulaKind::t)
    out["dof"] = m.dof;
  json marginals = json::array();
  for (const auto& f : m.marginals)
    marginals.push_back(marginal_to_json(f));
  out["marginals"] = std::move(marginals);
  return out;
}

inline ParametricCopulaModel parametric_copula_from_json(const json& j)
{
  ParametricCopulaModel m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "normal")
    m.kind = CopulaKind::normal;
  else if (kind == "t")
    m.kind = CopulaKind::t;
  else
    throw data_error("model json: unknown copula kind '" + kind + "'");
  m.correlation = detail::matrix_from_json(j.at("correlation"));
  if (m.kind == CopulaKind::t)
    m.dof = j.at("dof").get<int>();
  for (const auto& f : j.at("marginals"))
    m.marginals.push_back(marginal_from_json(f));
  return m;
}

inline json estimate_to_json(const DensityEstimate& e)
{
  json out;
  out["schema_version"] = schema_version;
  out["estimator"] = estimator_name(e.id);
  if (const auto* m = std::get_if<vb::MixtureModel>(&e.model))
    out["model"] = mixture_to_json(*m);
  else if (const auto* m = std::get_if<CopulaTypeModel>(&e.model))
    out["model"] = copula_type_to_json(*m);
  else
    out["model"] = parametric_copula_to_json(std::get<ParametricCopulaModel>(e.model));
  return out;
}

inline DensityEstimate estimate_from_json(const json& j)
{
  const int version = j.at("schema_version").get<int>();
  if (version != schema_version)
    throw data_error("model json: unsupported schema_version " + std::to_string(version));
  DensityEstimate e;
  e.id = estimator_from_name(j.at("estimator").get<std::string>());
  const json& model = j.at("model");
  const std::string type = model.at("type").get<std::string>();
  if (type == "mixture")
    e.model = mixture_from_json(model);
  else if (type == "copula-type")
    e.model = copula_type_from_json(model);
  else if (type == "parametric-copula")
    e.model = parametric_copula_from_json(model);
  else
    throw data_error("model json: unknown model type '" + type + "'");
  return e;
}

//! A saved model: the estimate plus an optional fit-information block
//! (seed, priors, options).  The block is carried through load/save
//! verbatim so round trips are byte-identical.
struct StoredModel {
  DensityEstimate estimate;
  json fit_info;
};

inline json model_to_json(const StoredModel& m)
{
  json out = estimate_to_json(m.estimate);
  if (!m.fit_info.is_null())
    out["fit"] = m.fit_info;
  return out;
}

inline StoredModel model_from_json(const json& j)
{
  StoredModel m;
  m.estimate = estimate_from_json(j);
  if (j.contains("fit"))
    m.fit_info = j.at("fit");
  return m;
}

//! Save a model atomically as pretty-printed JSON.
inline void save_model(const std::string& path, const StoredModel& m)
{
  atomic_write(path, model_to_json(m).dump(2) + "\n");
}

inline StoredModel load_model(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw data_error("load_model: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw data_error("load_model: '" + path + "' is not valid JSON: " + ex.what());
  }
  return model_from_json(j);
}

} // namespace ctdens::io
