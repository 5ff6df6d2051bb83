#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/numerics/density.hpp"
#include "ctdens/numerics/spd_matrix.hpp"
#include "ctdens/vb/family.hpp"

namespace ctdens::vb {

//! Per-column affine transform applied to training data before fitting:
//! z_j = (y_j - shift_j) / scale_j.
struct Standardization {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  static Standardization identity(int d)
  {
    return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
  }

  Eigen::VectorXd to_internal(const Eigen::VectorXd& y) const
  {
    return (y - shift).cwiseQuotient(scale);
  }

  //! log |d z / d y| = -sum_j log scale_j.
  double log_jacobian() const { return -scale.array().log().sum(); }
};

//! Fitted mixture with posterior-mean parameters.  Component parameters
//! live in standardized coordinates; `standardization` maps back to the
//! original units and densities account for the Jacobian.
class MixtureModel {
public:
  Family family = Family::mn;
  int dim = 0;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> locations;      // one per component
  std::vector<Eigen::MatrixXd> scales;         // full-scale families
  std::vector<Eigen::MatrixXd> loadings;       // factor families, d x k_j
  std::vector<double> noise_precision;         // factor families
  std::vector<int> dof;                        // t families
  Standardization standardization;

  int n_components() const { return static_cast<int>(weights.size()); }

  //! Effective scale of component j in standardized coordinates:
  //! the stored scale, or Lambda Lambda' + psi^{-1} I for factor families.
  const SpdMatrix& component_scale(int j) const
  {
    ensure_cache();
    return (*cache_)[j];
  }

  //! Log density at y in original units.
  double logpdf(const Eigen::VectorXd& y) const
  {
    if (y.size() != dim)
      throw std::invalid_argument("MixtureModel::logpdf: dimension mismatch");
    const Eigen::VectorXd z = standardization.to_internal(y);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(weights.size());
    for (int j = 0; j < n_components(); ++j) {
      double lp = std::log(weights[j]);
      if (is_t_family(family))
        lp += mvt_logpdf(z, locations[j], component_scale(j), dof[j]);
      else
        lp += mvn_logpdf(z, locations[j], component_scale(j));
      terms[j] = lp;
      best = std::max(best, lp);
    }
    if (!std::isfinite(best))
      return best;
    double sum = 0.0;
    for (double t : terms)
      sum += std::exp(t - best);
    return best + std::log(sum) + standardization.log_jacobian();
  }

private:
  void ensure_cache() const
  {
    if (cache_)
      return;
    cache_.emplace();
    cache_->reserve(weights.size());
    for (int j = 0; j < n_components(); ++j) {
      if (is_factor_family(family)) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Identity(dim, dim) / noise_precision[j];
        if (loadings[j].cols() > 0)
          s += loadings[j] * loadings[j].transpose();
        cache_->emplace_back(s);
      } else {
        cache_->emplace_back(scales[j]);
      }
    }
  }

  mutable std::optional<std::vector<SpdMatrix>> cache_;
};

//! Log density of the mixture at y; free-function form of logpdf.
inline double mixture_logpdf(const MixtureModel& model, const Eigen::VectorXd& y)
{
  return model.logpdf(y);
}

struct StandardizedData {
  Eigen::MatrixXd x;
  Standardization record;
};

//! Column-wise standardization to zero mean and unit sample variance
//! (n - 1 convention).  Degenerate columns are rejected.
inline StandardizedData standardize_columns(const Eigen::MatrixXd& y)
{
  const int n = static_cast<int>(y.rows());
  const int d = static_cast<int>(y.cols());
  if (n < 2)
    throw data_error("standardize_columns: need at least two rows");
  Standardization rec;
  rec.shift = y.colwise().mean();
  rec.scale.resize(d);
  for (int j = 0; j < d; ++j) {
    const double ss = (y.col(j).array() - rec.shift[j]).square().sum();
    const double sd = std::sqrt(ss / (n - 1));
    //! The exact max == min test catches constant columns whose mean
    //! rounds a hair off the shared value, which leaves ss positive.
    if (y.col(j).maxCoeff() == y.col(j).minCoeff() || !(sd > 0.0) || !std::isfinite(sd))
      throw data_error("standardize_columns: column " + std::to_string(j) + " has zero or non-finite variance");
    rec.scale[j] = sd;
  }
  Eigen::MatrixXd x = y;
  x.rowwise() -= rec.shift.transpose();
  x.array().rowwise() /= rec.scale.transpose().array();
  return {std::move(x), std::move(rec)};
}

} // namespace ctdens::vb
