#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ctdens/common.hpp"

namespace ctdens {

//! Derive an independent stream seed from a master seed; splitmix64 step.
//! Distinct stream ids give uncorrelated streams for any master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream)
{
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Seeded generator with portable uniform/normal draws.  The draw
//! algorithms are fixed here rather than delegated to std distributions,
//! whose output sequences differ across standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed)
    : engine_(seed)
  {}

  //! Uniform draw on [0, 1) with 53 random bits.
  double uniform()
  {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  //! Uniform draw on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  //! Integer draw on {0, ..., n - 1} by rejection; unbiased.
  std::uint64_t uniform_int(std::uint64_t n)
  {
    if (n == 0)
      throw numeric_error("uniform_int: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw = engine_();
    while (draw >= limit)
      draw = engine_();
    return draw % n;
  }

  //! Standard normal draw; Box-Muller, one spare cached.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * constants::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  //! Chi-square draw with integer degrees of freedom (sum of squares).
  double chi_square(int dof)
  {
    double sum = 0.0;
    for (int i = 0; i < dof; ++i) {
      const double z = normal();
      sum += z * z;
    }
    return sum;
  }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace ctdens
