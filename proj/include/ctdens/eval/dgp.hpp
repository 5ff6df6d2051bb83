#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"
#include "ctdens/copula/copula.hpp"
#include "ctdens/marginals/marginal.hpp"
#include "ctdens/rng.hpp"
#include "ctdens/vb/model.hpp"

namespace ctdens {

//! Synthetic data generators used throughout the experiments: a latent
//! two-component normal mixture pushed through marginal transforms.
//! `standard` scales with d; `motivating` is the fixed d = 2 example
//! with one normal and one t data marginal.
enum class DgpVariant { standard, motivating };

class Dgp {
public:
  Dgp(DgpVariant variant, int d)
    : variant_(variant)
    , d_(d)
  {
    if (variant == DgpVariant::motivating && d != 2)
      throw std::invalid_argument("Dgp: the motivating variant is two-dimensional");
    if (d < 1)
      throw std::invalid_argument("Dgp: need d >= 1");
  }

  DgpVariant variant() const { return variant_; }
  int dim() const { return d_; }

  //! The latent mixture in the transformed space, exactly.
  vb::MixtureModel x_mixture() const
  {
    vb::MixtureModel m;
    m.family = vb::Family::mn;
    m.dim = d_;
    m.weights = {0.5, 0.5};
    if (variant_ == DgpVariant::standard) {
      m.locations.push_back(Eigen::VectorXd::Constant(d_, -2.0));
      m.locations.push_back(Eigen::VectorXd::Constant(d_, 2.0));
      Eigen::MatrixXd v1(d_, d_), v2(d_, d_);
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j) {
          v1(i, j) = std::pow(0.5, std::abs(i - j));
          v2(i, j) = std::pow(-0.5, std::abs(i - j));
        }
      m.scales = {v1, v2};
    } else {
      m.locations.push_back(Eigen::VectorXd::Constant(2, 2.0));
      m.locations.push_back(Eigen::VectorXd::Constant(2, -2.0));
      Eigen::MatrixXd v1(2, 2), v2(2, 2);
      v1 << 1.0, 0.6, 0.6, 1.0;
      v2 << 1.0, -0.6, -0.6, 1.0;
      m.scales = {v1, v2};
    }
    m.standardization = vb::Standardization::identity(d_);
    return m;
  }

  //! Marginal of the latent mixture; the same in every coordinate.
  MarginalModel x_marginal(int) const
  {
    return MarginalModel::mixture(MarginalKind::univ_mix_normal, {0.5, 0.5},
                                  variant_ == DgpVariant::standard ? std::vector<double>{-2.0, 2.0}
                                                                   : std::vector<double>{2.0, -2.0},
                                  {1.0, 1.0}, {});
  }

  //! Data-space marginal F_j.  The t marginal has unit variance: with
  //! 5 dofs the scale is sqrt(3/5), so that the marginal moments match
  //! the variance-parameterized normal coordinate of the motivating
  //! variant and every coordinate of the generator is on one scale.
  MarginalModel data_marginal(int j) const
  {
    if (variant_ == DgpVariant::motivating && j == 0)
      return MarginalModel::normal(1.0, std::sqrt(3.0));
    return MarginalModel::student_t(0.0, std::sqrt(0.6), 5.0);
  }

  std::vector<MarginalModel> data_marginals() const
  {
    std::vector<MarginalModel> out;
    for (int j = 0; j < d_; ++j)
      out.push_back(data_marginal(j));
    return out;
  }

  //! Draw n observations in data units.
  Eigen::MatrixXd simulate(int n, std::uint64_t seed) const
  {
    const vb::MixtureModel mix = x_mixture();
    std::vector<Eigen::MatrixXd> chol;
    for (const auto& v : mix.scales)
      chol.push_back(Eigen::LLT<Eigen::MatrixXd>(v).matrixL());
    Rng rng(seed);
    Eigen::MatrixXd y(n, d_);
    for (int i = 0; i < n; ++i) {
      const int comp = rng.uniform() < mix.weights[0] ? 0 : 1;
      Eigen::VectorXd z(d_);
      for (int j = 0; j < d_; ++j)
        z[j] = rng.normal();
      const Eigen::VectorXd x = mix.locations[comp] + chol[comp] * z;
      for (int j = 0; j < d_; ++j) {
        const double u = clamp_probability(x_marginal(j).cdf(x[j]));
        y(i, j) = data_marginal(j).quantile(u);
      }
    }
    return y;
  }

  //! Exact log density of the generated data at y.
  double true_logpdf(const Eigen::VectorXd& y) const
  {
    ensure_truth();
    return ct_logpdf(*truth_, y);
  }

private:
  void ensure_truth() const
  {
    if (!truth_)
      truth_.emplace(exact_copula_model(x_mixture(), data_marginals()));
  }

  DgpVariant variant_;
  int d_;
  mutable std::optional<CopulaTypeModel> truth_;
};

} // namespace ctdens
