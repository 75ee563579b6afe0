#pragma once

// Invertible maps of the unit torus T^k used as bases for suspensions:
// identity, rotations (translations) and hyperbolic/integer automorphisms.

#include <cmath>
#include <string>
#include <vector>
#include <variant>

#include "flowcent/field.hpp"

namespace flowcent {

struct IdentityMap {
  int dim = 1;
};

struct RotationMap {
  Vec rho;
};

/// x -> M x mod 1 for an integer matrix with det = +-1.
struct AutomorphismMap {
  Mat matrix;
  Mat inverse;
};

class BaseMap {
 public:
  using Kind = std::variant<IdentityMap, RotationMap, AutomorphismMap>;

  static BaseMap identity(int dim) {
    require(dim >= 1, "identity map: dimension must be positive");
    return BaseMap(IdentityMap{dim});
  }
  static BaseMap rotation(const Vec& rho) {
    require(rho.size() >= 1 && rho.allFinite(), "rotation map: bad angle vector");
    return BaseMap(RotationMap{rho});
  }
  static BaseMap automorphism(const Mat& m) {
    require_square(m, "automorphism map");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        require(m(i, j) == std::round(m(i, j)), "automorphism map: entries must be integers");
    const double det = m.determinant();
    require(std::abs(std::abs(det) - 1.0) < 1e-9, "automorphism map: determinant must be +-1");
    Mat inv = m.inverse();
    inv = inv.array().round().matrix();
    return BaseMap(AutomorphismMap{m, inv});
  }

  const Kind& kind() const { return kind_; }

  int dim() const {
    return std::visit(
        [](const auto& k) -> int {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, IdentityMap>) {
            return k.dim;
          } else if constexpr (std::is_same_v<T, RotationMap>) {
            return static_cast<int>(k.rho.size());
          } else {
            return static_cast<int>(k.matrix.rows());
          }
        },
        kind_);
  }

  Domain domain() const { return Domain::torus(static_cast<std::size_t>(dim())); }

  /// f^n(x), n may be negative.
  Vec iterate(const Vec& x, long n) const {
    return std::visit(
        [&](const auto& k) -> Vec {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, IdentityMap>) {
            return domain().canonical(x);
          } else if constexpr (std::is_same_v<T, RotationMap>) {
            Vec y = x;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
              // reduce n * rho mod 1 first to keep the rounding independent of n
              const double shift = wrap01(static_cast<double>(n) * wrap01(k.rho(i)));
              y(i) = wrap01(y(i) + shift);
            }
            return y;
          } else {
            Vec y = domain().canonical(x);
            const Mat& m = n >= 0 ? k.matrix : k.inverse;
            for (long s = 0; s < std::abs(n); ++s) y = domain().canonical(m * y);
            return y;
          }
        },
        kind_);
  }

  Vec apply(const Vec& x) const { return iterate(x, 1); }
  Vec apply_inverse(const Vec& x) const { return iterate(x, -1); }

  /// Bi-Lipschitz constant for the torus metric: max(|M|, |M^{-1}|).
  double lipschitz() const {
    if (const auto* a = std::get_if<AutomorphismMap>(&kind_)) {
      Eigen::JacobiSVD<Mat> s1(a->matrix), s2(a->inverse);
      return std::max(s1.singularValues()(0), s2.singularValues()(0));
    }
    return 1.0;
  }

  /// Linear part (identity for rotations), used to compose Lipschitz bounds.
  Mat linear_part() const {
    if (const auto* a = std::get_if<AutomorphismMap>(&kind_)) return a->matrix;
    return Mat::Identity(dim(), dim());
  }

  double distance(const Vec& a, const Vec& b) const { return domain().distance(a, b); }

 private:
  explicit BaseMap(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

/// f_1^{s_1} o ... o f_d^{s_d}(x) for a corner s of {0,1}^d given as a bit mask.
inline Vec corner_image(const std::vector<BaseMap>& gens, unsigned mask, const Vec& x) {
  Vec y = x;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (mask & (1u << i)) y = gens[i].apply(y);
  }
  return y;
}

/// Weight of corner `mask` at heights t: prod_i [s_i t_i + (1 - s_i)(1 - t_i)].
inline double corner_weight(unsigned mask, const Vec& t) {
  double w = 1.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    w *= (mask & (1u << i)) ? t(i) : 1.0 - t(i);
  }
  return w;
}

/// Convex combination over corners of the base distances between corner
/// images of x and y (the fiber metric of a roof-one suspension).
inline double fiber_distance(const std::vector<BaseMap>& gens, const Vec& heights, const Vec& x,
                             const Vec& y) {
  require(static_cast<Eigen::Index>(gens.size()) == heights.size(), "fiber_distance: rank mismatch");
  const unsigned corners = 1u << gens.size();
  const Domain dom = gens.front().domain();
  double total = 0.0;
  for (unsigned mask = 0; mask < corners; ++mask) {
    const double w = corner_weight(mask, heights);
    if (w == 0.0) continue;
    total += w * dom.distance(corner_image(gens, mask, x), corner_image(gens, mask, y));
  }
  return total;
}

}  // namespace flowcent
