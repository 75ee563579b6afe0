#pragma once

// Seeded randomness with a fixed bit-to-double conversion, so that sampled
// experiments reproduce across standard library implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "flowcent/linalg.hpp"

namespace flowcent {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n) by rejection.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t r;
    do r = gen_();
    while (r >= limit);
    return r % n;
  }

  /// Standard normal by Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniformly distributed unit vector in R^n.
  Vec direction(Eigen::Index n) {
    Vec v(n);
    do {
      for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    } while (v.norm() < 1e-12);
    return v / v.norm();
  }

  Vec uniform_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform();
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace flowcent
