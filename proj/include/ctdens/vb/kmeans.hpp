#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/rng.hpp"

namespace ctdens::vb {

//! Seeded k-means++ with a short Lloyd refinement; returns hard labels.
//! Deterministic for a fixed seed.  Emptied clusters are reseeded from
//! the point farthest from its center.
inline std::vector<int> kmeans_labels(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int lloyd_iters = 20)
{
  const int n = static_cast<int>(x.rows());
  if (k < 1 || n < 1)
    throw std::invalid_argument("kmeans_labels: need k >= 1 and n >= 1");
  if (k > n)
    k = n;

  Rng rng(seed);
  Eigen::MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<int>(rng.uniform_int(n)));
  Eigen::VectorXd dist2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    int pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.uniform_int(n));
    }
    centers.row(c) = x.row(pick);
    dist2 = dist2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(n, 0);
  for (int iter = 0; iter < lloyd_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(labels[i]) += x.row(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = (x.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = x.row(far);
        changed = true;
      }
    }
    if (!changed && iter > 0)
      break;
  }
  return labels;
}

} // namespace ctdens::vb
