#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/numerics/invert_cdf.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/vb/model.hpp"

namespace ctdens {

enum class MarginalKind {
  kernel,
  univ_mix_normal,
  univ_mix_t,
  implied_mix_normal,
  implied_mix_t,
};

inline std::string marginal_kind_name(MarginalKind k)
{
  switch (k) {
    case MarginalKind::kernel: return "kernel";
    case MarginalKind::univ_mix_normal: return "univ-mix-normal";
    case MarginalKind::univ_mix_t: return "univ-mix-t";
    case MarginalKind::implied_mix_normal: return "implied-mix-normal";
    case MarginalKind::implied_mix_t: return "implied-mix-t";
  }
  throw std::invalid_argument("marginal_kind_name: unknown kind");
}

inline MarginalKind marginal_kind_from_name(const std::string& name)
{
  if (name == "kernel") return MarginalKind::kernel;
  if (name == "univ-mix-normal") return MarginalKind::univ_mix_normal;
  if (name == "univ-mix-t") return MarginalKind::univ_mix_t;
  if (name == "implied-mix-normal") return MarginalKind::implied_mix_normal;
  if (name == "implied-mix-t") return MarginalKind::implied_mix_t;
  throw std::invalid_argument("marginal_kind_from_name: unknown kind '" + name + "'");
}

//! Univariate distribution model: a Gaussian kernel density estimate or
//! a finite normal/t mixture (fitted, parametric, or the implied
//! marginal of a joint mixture).  Provides pdf, cdf, and quantile.
class MarginalModel {
public:
  //! Kernel density estimate with Silverman's bandwidth.
  static MarginalModel kernel(const Eigen::VectorXd& samples)
  {
    const int n = static_cast<int>(samples.size());
    if (n < 2)
      throw data_error("MarginalModel::kernel: need at least two samples");
    const double mean = samples.mean();
    const double sd = std::sqrt((samples.array() - mean).square().sum() / (n - 1));
    std::vector<double> sorted(samples.data(), samples.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto quantile_at = [&](double p) {
      const double pos = p * (n - 1);
      const int lo = static_cast<int>(std::floor(pos));
      const int hi = std::min(lo + 1, n - 1);
      return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    const double iqr = quantile_at(0.75) - quantile_at(0.25);
    double spread = sd;
    if (iqr > 0.0)
      spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0))
      throw data_error("MarginalModel::kernel: degenerate sample spread");
    MarginalModel m;
    m.kind_ = MarginalKind::kernel;
    m.points_ = samples;
    m.bandwidth_ = 0.9 * spread * std::pow(n, -0.2);
    return m;
  }

  //! Kernel density estimate with an explicitly given bandwidth; used
  //! when restoring a saved model.
  static MarginalModel kernel_with_bandwidth(const Eigen::VectorXd& samples, double bandwidth)
  {
    if (samples.size() < 1 || !(bandwidth > 0.0))
      throw data_error("MarginalModel::kernel_with_bandwidth: invalid samples or bandwidth");
    MarginalModel m;
    m.kind_ = MarginalKind::kernel;
    m.points_ = samples;
    m.bandwidth_ = bandwidth;
    return m;
  }

  //! Single normal component; sd is the standard deviation.
  static MarginalModel normal(double mu, double sd)
  {
    return mixture(MarginalKind::univ_mix_normal, {1.0}, {mu}, {sd}, {});
  }

  //! Single t component; `scale` multiplies a standard t with `dof` dofs.
  static MarginalModel student_t(double loc, double scale, double dof)
  {
    return mixture(MarginalKind::univ_mix_t, {1.0}, {loc}, {scale}, {dof});
  }

  //! Finite mixture; `dofs` must be given for the t kinds and empty
  //! for the normal kinds.
  static MarginalModel mixture(MarginalKind kind, std::vector<double> weights, std::vector<double> locations,
                               std::vector<double> scales, std::vector<double> dofs)
  {
    if (kind == MarginalKind::kernel)
      throw std::invalid_argument("MarginalModel::mixture: kernel is not a mixture kind");
    const bool wants_t = kind == MarginalKind::univ_mix_t || kind == MarginalKind::implied_mix_t;
    if (weights.empty() || weights.size() != locations.size() || weights.size() != scales.size()
        || (wants_t ? dofs.size() != weights.size() : !dofs.empty()))
      throw std::invalid_argument("MarginalModel::mixture: inconsistent component arrays");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] >= 0.0) || !(scales[i] > 0.0) || (wants_t && !(dofs[i] > 0.0)))
        throw std::invalid_argument("MarginalModel::mixture: invalid component parameters");
      total += weights[i];
    }
    if (!(total > 0.0))
      throw std::invalid_argument("MarginalModel::mixture: weights must sum to a positive value");
    for (double& w : weights)
      w /= total;
    MarginalModel m;
    m.kind_ = kind;
    m.weights_ = std::move(weights);
    m.locations_ = std::move(locations);
    m.scales_ = std::move(scales);
    m.dofs_ = std::move(dofs);
    return m;
  }

  //! Marginal distribution of one coordinate of a joint mixture, in the
  //! original data units.
  static MarginalModel implied(const vb::MixtureModel& joint, int column)
  {
    if (column < 0 || column >= joint.dim)
      throw std::invalid_argument("MarginalModel::implied: column out of range");
    const bool t_family = vb::is_t_family(joint.family);
    const double shift = joint.standardization.shift[column];
    const double scale = joint.standardization.scale[column];
    std::vector<double> w, loc, sc, dofs;
    for (int j = 0; j < joint.n_components(); ++j) {
      w.push_back(joint.weights[j]);
      loc.push_back(shift + scale * joint.locations[j][column]);
      sc.push_back(scale * std::sqrt(joint.component_scale(j).matrix()(column, column)));
      if (t_family)
        dofs.push_back(static_cast<double>(joint.dof[j]));
    }
    return mixture(t_family ? MarginalKind::implied_mix_t : MarginalKind::implied_mix_normal,
                   std::move(w), std::move(loc), std::move(sc), std::move(dofs));
  }

  MarginalKind kind() const { return kind_; }
  bool is_t() const { return kind_ == MarginalKind::univ_mix_t || kind_ == MarginalKind::implied_mix_t; }

  double log_pdf(double y) const
  {
    if (kind_ == MarginalKind::kernel) {
      const Eigen::ArrayXd z = (points_.array() - y) / bandwidth_;
      const double m = (-0.5 * z.square()).maxCoeff();
      const double sum = (-0.5 * z.square() - m).exp().sum();
      return m + std::log(sum) - std::log(points_.size() * bandwidth_) - 0.5 * constants::log_2pi;
    }
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(weights_.size());
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      const double z = (y - locations_[j]) / scales_[j];
      double lp = std::log(weights_[j]) - std::log(scales_[j]);
      lp += is_t() ? student_t_logpdf(z, dofs_[j]) : normal_logpdf(z);
      terms[j] = lp;
      best = std::max(best, lp);
    }
    double sum = 0.0;
    for (double t : terms)
      sum += std::exp(t - best);
    return best + std::log(sum);
  }

  double pdf(double y) const { return std::exp(log_pdf(y)); }

  double cdf(double y) const
  {
    if (kind_ == MarginalKind::kernel) {
      double acc = 0.0;
      for (int i = 0; i < points_.size(); ++i)
        acc += normal_cdf((y - points_[i]) / bandwidth_);
      return acc / points_.size();
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      const double z = (y - locations_[j]) / scales_[j];
      acc += weights_[j] * (is_t() ? student_t_cdf(z, dofs_[j]) : normal_cdf(z));
    }
    return acc;
  }

  //! Inverse cdf; clamps u away from {0, 1} first.
  double quantile(double u) const
  {
    u = clamp_probability(u);
    if (kind_ != MarginalKind::kernel && weights_.size() == 1) {
      const double z = is_t() ? student_t_quantile(u, dofs_[0]) : normal_quantile(u);
      return locations_[0] + scales_[0] * z;
    }
    return invert_cdf([this](double y) { return cdf(y); }, u, bracket_center(), bracket_width());
  }

  //! Component access for serialization and reporting.
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& locations() const { return locations_; }
  const std::vector<double>& scales() const { return scales_; }
  const std::vector<double>& dofs() const { return dofs_; }
  const Eigen::VectorXd& kernel_points() const { return points_; }
  double kernel_bandwidth() const { return bandwidth_; }

private:
  MarginalModel() = default;

  double bracket_center() const
  {
    if (kind_ == MarginalKind::kernel)
      return points_.mean();
    double c = 0.0;
    for (std::size_t j = 0; j < weights_.size(); ++j)
      c += weights_[j] * locations_[j];
    return c;
  }

  double bracket_width() const
  {
    if (kind_ == MarginalKind::kernel) {
      const double mean = points_.mean();
      const double sd = std::sqrt((points_.array() - mean).square().mean());
      return std::max(sd + bandwidth_, 1e-6);
    }
    const double center = bracket_center();
    double width = 1e-6;
    for (std::size_t j = 0; j < weights_.size(); ++j)
      width = std::max(width, std::fabs(locations_[j] - center) + 3.0 * scales_[j]);
    return width;
  }

  MarginalKind kind_ = MarginalKind::univ_mix_normal;
  std::vector<double> weights_, locations_, scales_, dofs_;
  Eigen::VectorXd points_;
  double bandwidth_ = 0.0;
};

} // namespace ctdens
