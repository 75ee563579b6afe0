#pragma once

// Closed-form vector fields with analytic Jacobians, plus the state-space
// geometry (boxes and unit-period tori) they live on.

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "flowcent/linalg.hpp"

namespace flowcent {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// x mod 1 in [0, 1).
inline double wrap01(double x) {
  double r = x - std::floor(x);
  if (r >= 1.0) r -= 1.0;
  return r;
}

/// Shortest signed representative of d modulo 1, in [-0.5, 0.5].
inline double wrap_diff(double d) { return d - std::round(d); }

/// Per-coordinate geometry: periodic coordinates have period 1 and live in
/// [0, 1); the others are bounded by [lower, upper] (used for searches only).
struct Domain {
  std::vector<bool> periodic;
  Vec lower;
  Vec upper;

  std::size_t dim() const { return periodic.size(); }

  static Domain box(const Vec& lo, const Vec& hi) {
    return {std::vector<bool>(static_cast<std::size_t>(lo.size()), false), lo, hi};
  }
  static Domain torus(std::size_t n) {
    return {std::vector<bool>(n, true), Vec::Zero(static_cast<Eigen::Index>(n)),
            Vec::Ones(static_cast<Eigen::Index>(n))};
  }

  bool any_periodic() const {
    for (bool p : periodic)
      if (p) return true;
    return false;
  }

  Vec canonical(Vec x) const {
    for (std::size_t i = 0; i < periodic.size(); ++i) {
      if (periodic[i]) x(static_cast<Eigen::Index>(i)) = wrap01(x(static_cast<Eigen::Index>(i)));
    }
    return x;
  }

  /// b - a using the nearest periodic image on periodic coordinates.
  Vec difference(const Vec& a, const Vec& b) const {
    Vec d = b - a;
    for (std::size_t i = 0; i < periodic.size(); ++i) {
      if (periodic[i]) d(static_cast<Eigen::Index>(i)) = wrap_diff(d(static_cast<Eigen::Index>(i)));
    }
    return d;
  }

  double distance(const Vec& a, const Vec& b) const { return difference(a, b).norm(); }
};

// ---------------------------------------------------------------------------
// Scalar factors h(x): time changes, bumps, roofs.

struct ConstantFactor {
  double value = 1.0;
};

/// offset + amplitude * sin(2 pi <w, x>).
struct SineRidge {
  double offset = 0.0;
  double amplitude = 1.0;
  Vec w;
};

/// 1 - exp(-k * sum_i (sin(pi (x_i - p_i)) / pi)^2): smooth on the torus,
/// zero exactly at p and positive elsewhere.
struct TorusBump {
  Vec center;
  double sharpness = 10.0;
};

class ScalarFactor {
 public:
  using Kind = std::variant<ConstantFactor, SineRidge, TorusBump>;

  ScalarFactor() : kind_(ConstantFactor{1.0}) {}
  ScalarFactor(Kind k) : kind_(std::move(k)) {}  // NOLINT(google-explicit-constructor)

  const Kind& kind() const { return kind_; }

  double value(const Vec& x) const {
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantFactor>) {
            return f.value;
          } else if constexpr (std::is_same_v<T, SineRidge>) {
            return f.offset + f.amplitude * std::sin(kTwoPi * f.w.dot(x));
          } else {
            double s2 = 0;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
              const double s = std::sin(std::numbers::pi * (x(i) - f.center(i))) / std::numbers::pi;
              s2 += s * s;
            }
            return -std::expm1(-f.sharpness * s2);
          }
        },
        kind_);
  }

  Vec gradient(const Vec& x) const {
    return std::visit(
        [&](const auto& f) -> Vec {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantFactor>) {
            return Vec::Zero(x.size());
          } else if constexpr (std::is_same_v<T, SineRidge>) {
            return (f.amplitude * kTwoPi * std::cos(kTwoPi * f.w.dot(x))) * f.w;
          } else {
            Vec g(x.size());
            double s2 = 0;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
              const double arg = std::numbers::pi * (x(i) - f.center(i));
              const double s = std::sin(arg) / std::numbers::pi;
              s2 += s * s;
              g(i) = 2.0 * s * std::cos(arg);
            }
            return (f.sharpness * std::exp(-f.sharpness * s2)) * g;
          }
        },
        kind_);
  }

  /// Analytic infimum over the whole space.
  double lower_bound() const {
    return std::visit(
        [](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantFactor>) {
            return f.value;
          } else if constexpr (std::is_same_v<T, SineRidge>) {
            return f.w.isZero() ? f.offset + 0.0 : f.offset - std::abs(f.amplitude);
          } else {
            return 0.0;
          }
        },
        kind_);
  }

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Vector fields.

class VectorField;

struct LorenzField {
  double a = 10.0;
  double b = 8.0 / 3.0;
  double r = 28.0;
};

struct LinearField {
  Mat matrix;
};

/// Constant field alpha on the unit torus T^n.
struct TorusTranslation {
  Vec alpha;
};

/// f(x) * alpha on T^2 with f a TorusBump centred at `center`.
struct DampedTorus {
  Vec alpha;
  Vec center;
  double sharpness = 10.0;
};

/// h(x) * Y(x).
struct ScaledField {
  ScalarFactor factor;
  std::shared_ptr<const VectorField> base;
};

/// sum_k c_k Y_k(x).
struct CombinationField {
  std::vector<double> coefficients;
  std::vector<VectorField> fields;
};

struct Monomial {
  int component = 0;
  double coefficient = 0.0;
  std::vector<int> exponents;
};

/// Each output component is a sum of monomials in the state.
struct PolynomialField {
  int dimension = 0;
  std::vector<Monomial> terms;
};

class VectorField {
 public:
  using Kind = std::variant<LorenzField, LinearField, TorusTranslation, DampedTorus, ScaledField,
                            CombinationField, PolynomialField>;

  VectorField(Kind k, Domain d) : kind_(std::move(k)), domain_(std::move(d)) { validate(); }

  static VectorField lorenz(double a = 10.0, double b = 8.0 / 3.0, double r = 28.0) {
    Vec lo(3), hi(3);
    lo << -60, -80, -20;
    hi << 60, 80, 100;
    return {LorenzField{a, b, r}, Domain::box(lo, hi)};
  }
  static VectorField linear(const Mat& b) {
    const auto n = b.rows();
    return {LinearField{b}, Domain::box(Vec::Constant(n, -10.0), Vec::Constant(n, 10.0))};
  }
  static VectorField torus_translation(const Vec& alpha) {
    return {TorusTranslation{alpha}, Domain::torus(static_cast<std::size_t>(alpha.size()))};
  }
  static VectorField damped_torus(const Vec& alpha, const Vec& center, double sharpness) {
    return {DampedTorus{alpha, center, sharpness}, Domain::torus(2)};
  }
  static VectorField scaled(ScalarFactor h, const VectorField& base) {
    return {ScaledField{std::move(h), std::make_shared<const VectorField>(base)}, base.domain()};
  }
  static VectorField combination(std::vector<double> coeffs, std::vector<VectorField> fields) {
    require(!fields.empty(), "combination: needs at least one field");
    Domain d = fields.front().domain();
    return {CombinationField{std::move(coeffs), std::move(fields)}, std::move(d)};
  }
  static VectorField polynomial(int dimension, std::vector<Monomial> terms, Domain d) {
    return {PolynomialField{dimension, std::move(terms)}, std::move(d)};
  }
  static VectorField polynomial(int dimension, std::vector<Monomial> terms) {
    return polynomial(dimension, std::move(terms),
                      Domain::box(Vec::Constant(dimension, -10.0), Vec::Constant(dimension, 10.0)));
  }

  const Kind& kind() const { return kind_; }
  const Domain& domain() const { return domain_; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(domain_.dim()); }

  Vec eval(const Vec& x) const {
    return std::visit([&](const auto& k) { return eval_kind(k, x); }, kind_);
  }

  Mat jacobian(const Vec& x) const {
    return std::visit([&](const auto& k) { return jacobian_kind(k, x); }, kind_);
  }

 private:
  void validate() const {
    const auto n = static_cast<Eigen::Index>(domain_.dim());
    require(n >= 1, "vector field: empty domain");
    require(domain_.lower.size() == n && domain_.upper.size() == n, "vector field: bad domain bounds");
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, LorenzField>) {
            require(n == 3, "lorenz: dimension must be 3");
            require(std::isfinite(k.a) && std::isfinite(k.b) && std::isfinite(k.r),
                    "lorenz: parameters must be finite");
          } else if constexpr (std::is_same_v<T, LinearField>) {
            require_square(k.matrix, "linear field");
            require(k.matrix.rows() == n, "linear field: matrix/domain dimension mismatch");
          } else if constexpr (std::is_same_v<T, TorusTranslation>) {
            require(k.alpha.size() == n && k.alpha.allFinite(), "torus_translation: bad alpha");
          } else if constexpr (std::is_same_v<T, DampedTorus>) {
            require(n == 2 && k.alpha.size() == 2 && k.center.size() == 2,
                    "damped_torus: lives on T^2");
            require(k.sharpness > 0, "damped_torus: sharpness must be positive");
          } else if constexpr (std::is_same_v<T, ScaledField>) {
            require(k.base != nullptr && k.base->dim() == n, "scaled: base dimension mismatch");
          } else if constexpr (std::is_same_v<T, CombinationField>) {
            require(k.coefficients.size() == k.fields.size(), "combination: coefficient count mismatch");
            for (const auto& f : k.fields) require(f.dim() == n, "combination: dimension mismatch");
          } else {
            require(k.dimension == n, "polynomial: dimension mismatch");
            for (const auto& m : k.terms) {
              require(m.component >= 0 && m.component < n, "polynomial: component out of range");
              require(static_cast<Eigen::Index>(m.exponents.size()) == n,
                      "polynomial: exponent vector length must equal dimension");
              for (int e : m.exponents) require(e >= 0, "polynomial: negative exponent");
            }
          }
        },
        kind_);
  }

  static Vec eval_kind(const LorenzField& k, const Vec& x) {
    Vec f(3);
    f << k.a * (x(1) - x(0)), -x(0) * x(2) + k.r * x(0) - x(1), x(0) * x(1) - k.b * x(2);
    return f;
  }
  static Mat jacobian_kind(const LorenzField& k, const Vec& x) {
    Mat j(3, 3);
    j << -k.a, k.a, 0, k.r - x(2), -1, -x(0), x(1), x(0), -k.b;
    return j;
  }

  static Vec eval_kind(const LinearField& k, const Vec& x) { return k.matrix * x; }
  static Mat jacobian_kind(const LinearField& k, const Vec&) { return k.matrix; }

  static Vec eval_kind(const TorusTranslation& k, const Vec&) { return k.alpha; }
  static Mat jacobian_kind(const TorusTranslation& k, const Vec&) {
    return Mat::Zero(k.alpha.size(), k.alpha.size());
  }

  static ScalarFactor bump(const DampedTorus& k) { return ScalarFactor(TorusBump{k.center, k.sharpness}); }
  static Vec eval_kind(const DampedTorus& k, const Vec& x) { return bump(k).value(x) * k.alpha; }
  static Mat jacobian_kind(const DampedTorus& k, const Vec& x) {
    return k.alpha * bump(k).gradient(x).transpose();
  }

  static Vec eval_kind(const ScaledField& k, const Vec& x) { return k.factor.value(x) * k.base->eval(x); }
  static Mat jacobian_kind(const ScaledField& k, const Vec& x) {
    return k.base->eval(x) * k.factor.gradient(x).transpose() + k.factor.value(x) * k.base->jacobian(x);
  }

  static Vec eval_kind(const CombinationField& k, const Vec& x) {
    Vec f = Vec::Zero(x.size());
    for (std::size_t i = 0; i < k.fields.size(); ++i) {
      if (k.coefficients[i] != 0.0) f += k.coefficients[i] * k.fields[i].eval(x);
    }
    return f;
  }
  static Mat jacobian_kind(const CombinationField& k, const Vec& x) {
    Mat j = Mat::Zero(x.size(), x.size());
    for (std::size_t i = 0; i < k.fields.size(); ++i) {
      if (k.coefficients[i] != 0.0) j += k.coefficients[i] * k.fields[i].jacobian(x);
    }
    return j;
  }

  static double monomial(const Monomial& m, const Vec& x, int skip, int& power_out) {
    double v = m.coefficient;
    for (std::size_t i = 0; i < m.exponents.size(); ++i) {
      int e = m.exponents[i];
      if (static_cast<int>(i) == skip) {
        power_out = e;
        if (e == 0) return 0.0;
        e -= 1;
      }
      for (int p = 0; p < e; ++p) v *= x(static_cast<Eigen::Index>(i));
    }
    return v;
  }
  static Vec eval_kind(const PolynomialField& k, const Vec& x) {
    Vec f = Vec::Zero(k.dimension);
    int unused = 0;
    for (const auto& m : k.terms) f(m.component) += monomial(m, x, -1, unused);
    return f;
  }
  static Mat jacobian_kind(const PolynomialField& k, const Vec& x) {
    Mat j = Mat::Zero(k.dimension, k.dimension);
    for (const auto& m : k.terms) {
      for (int v = 0; v < k.dimension; ++v) {
        int power = 0;
        const double d = monomial(m, x, v, power);
        j(m.component, v) += power * d;
      }
    }
    return j;
  }

  Kind kind_;
  Domain domain_;
};

/// Central finite-difference Jacobian with step (1e-6)(1 + |x|).
template <class F>
Mat numeric_jacobian(const F& f, const Vec& x) {
  const double h = 1e-6 * (1.0 + x.norm());
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// [X, Y](x) = DY(x) X(x) - DX(x) Y(x). Scalar multiples are peeled off
/// first with [X, hB] = X(h) B + h [X, B], so [X, cX] comes out exactly zero.
inline Vec lie_bracket(const VectorField& x_field, const VectorField& y_field, const Vec& x) {
  require(x_field.dim() == y_field.dim(), "lie_bracket: dimension mismatch");
  if (const auto* y = std::get_if<ScaledField>(&y_field.kind())) {
    const double xh = y->factor.gradient(x).dot(x_field.eval(x));
    return xh * y->base->eval(x) + y->factor.value(x) * lie_bracket(x_field, *y->base, x);
  }
  if (const auto* xs = std::get_if<ScaledField>(&x_field.kind())) {
    const double yg = xs->factor.gradient(x).dot(y_field.eval(x));
    return -(yg * xs->base->eval(x) + xs->factor.value(x) * lie_bracket(y_field, *xs->base, x));
  }
  return y_field.jacobian(x) * x_field.eval(x) - x_field.jacobian(x) * y_field.eval(x);
}

}  // namespace flowcent
