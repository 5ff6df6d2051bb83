#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctdens/common.hpp"

namespace ctdens::vb {

//! Mixture component families: multivariate normal / Student t with full
//! scale matrices, and their factor-analyzer counterparts.
enum class Family { mn, mt, mfa, mtfa };

inline bool is_t_family(Family f) { return f == Family::mt || f == Family::mtfa; }
inline bool is_factor_family(Family f) { return f == Family::mfa || f == Family::mtfa; }

inline std::string family_name(Family f)
{
  switch (f) {
    case Family::mn: return "mn";
    case Family::mt: return "mt";
    case Family::mfa: return "mfa";
    case Family::mtfa: return "mtfa";
  }
  throw std::invalid_argument("family_name: unknown family");
}

inline Family family_from_name(const std::string& name)
{
  if (name == "mn") return Family::mn;
  if (name == "mt") return Family::mt;
  if (name == "mfa") return Family::mfa;
  if (name == "mtfa") return Family::mtfa;
  throw std::invalid_argument("family_from_name: unknown family '" + name + "'");
}

//! Hyperparameters of the variational priors.  Defaults assume the data
//! have been standardized column-wise.
struct PriorConfig {
  double alpha0 = 1.0;    // Dirichlet concentration per component
  double kappa0 = 0.01;   // location precision multiplier
  double tau0 = 0.0;      // Wishart dof; 0 resolves to d + 2 at fit time
  double sigma0 = 1.0;    // Wishart scale matrix = sigma0 * I
  double a = 1e-3;        // Gamma shape for loadings/noise hyperpriors
  double b = 1e-3;        // Gamma rate for loadings/noise hyperpriors
  int nu_max = 100;       // upper end of the integer dof grid
  double prune_epsilon = 1e-3; // ARD threshold for dropping factor columns

  double resolve_tau0(int d) const { return tau0 > 0.0 ? tau0 : d + 2.0; }
};

struct FitOptions {
  int k_init = 5;
  int max_sweeps = 500;
  double param_tol = 1e-5;  // max-norm change of locations and scales
  std::uint64_t seed = 0;
  int kmeans_iters = 20;
  int max_evb_cycles = 50;
};

//! One row of the per-sweep diagnostic trace.  `factor_dims` is filled
//! for factor families, `dofs` for t families.
struct SweepRecord {
  int sweep = 0;
  double elbo = 0.0;
  int n_components = 0;
  std::vector<int> factor_dims;
  std::vector<int> dofs;
};

} // namespace ctdens::vb
