#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctdens/common.hpp"

namespace ctdens {

//! Symmetric positive definite matrix with a cached Cholesky factor.
//! All downstream solves and log determinants reuse the factor; the
//! matrix is never inverted explicitly.
class SpdMatrix {
public:
  //! Validates symmetry (1e-12 relative), symmetrizes, factorizes.
  //! Throws numeric_error when the matrix is not positive definite.
  explicit SpdMatrix(Eigen::MatrixXd m)
    : matrix_(std::move(m))
  {
    if (matrix_.rows() != matrix_.cols())
      throw std::invalid_argument("SpdMatrix: matrix must be square");
    const double scale = matrix_.cwiseAbs().maxCoeff();
    const double asym = (matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(scale, 1.0))
      throw std::invalid_argument("SpdMatrix: matrix is not symmetric");
    matrix_ = 0.5 * (matrix_ + matrix_.transpose().eval());
    llt_.compute(matrix_);
    if (llt_.info() != Eigen::Success || !(llt_.matrixLLT().diagonal().minCoeff() > 0.0))
      throw numeric_error("SpdMatrix: Cholesky factorization failed; matrix is not positive definite");
  }

  int dim() const { return static_cast<int>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  //! Lower Cholesky factor L with M = L L'.
  Eigen::MatrixXd chol_lower() const { return llt_.matrixL(); }

  //! log |M| = 2 sum_i log L_ii.
  double log_det() const
  {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  //! v' M^{-1} v through one triangular solve.
  double quad_form(const Eigen::VectorXd& v) const
  {
    return llt_.matrixL().solve(v).squaredNorm();
  }

  //! M^{-1} b.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }

  //! tr(M^{-1} b).
  double trace_solve(const Eigen::MatrixXd& b) const { return llt_.solve(b).trace(); }

private:
  Eigen::MatrixXd matrix_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

//! Factorize with a single jitter retry: on failure add
//! 1e-8 * trace / d to the diagonal once, then rethrow.
inline SpdMatrix spd_with_jitter(const Eigen::MatrixXd& m)
{
  try {
    return SpdMatrix(m);
  } catch (const numeric_error&) {
    const double jitter = 1e-8 * m.trace() / static_cast<double>(m.rows());
    Eigen::MatrixXd bumped = m;
    bumped.diagonal().array() += jitter;
    return SpdMatrix(bumped);
  }
}

} // namespace ctdens
