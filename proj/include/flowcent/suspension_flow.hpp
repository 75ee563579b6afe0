#pragma once

#include <cmath>

#include "flowcent/basemap.hpp"
#include "flowcent/integrator.hpp"

namespace flowcent {

/// Suspension flow of an invertible torus map f under a positive roof r:
/// states are (x, s) with 0 <= s < r(x) and (x, r(x)) ~ (f(x), 0). The flow
/// is the vertical displacement phi_t(x, s) = (x, s + t) with roof crossings.
class Suspension1dFlow {
 public:
  Suspension1dFlow(BaseMap map, ScalarFactor roof) : map_(std::move(map)), roof_(std::move(roof)) {
    require(roof_.lower_bound() > 0.0, "suspension1d: roof must be bounded away from zero");
    if (const auto* s = std::get_if<SineRidge>(&roof_.kind())) {
      require(s->w.size() == map_.dim(), "suspension1d: roof lives on the base torus");
    }
  }

  const BaseMap& map() const { return map_; }
  const ScalarFactor& roof() const { return roof_; }

  Eigen::Index dim() const { return map_.dim() + 1; }
  double roof_at(const Vec& base) const { return roof_.value(base); }

  static Vec base_of(const Vec& state) { return state.head(state.size() - 1); }
  static double height_of(const Vec& state) { return state(state.size() - 1); }
  static Vec make_state(const Vec& base, double s) {
    Vec out(base.size() + 1);
    out << base, s;
    return out;
  }

  /// Representative in the fundamental domain 0 <= s < r(x).
  Vec canonical(const Vec& state) const {
    require(state.size() == dim(), "suspension1d: state dimension mismatch");
    Vec x = map_.domain().canonical(base_of(state));
    double s = height_of(state);
    for (;;) {
      const double r = roof_at(x);
      if (s >= r) {
        s -= r;
        x = map_.apply(x);
      } else if (s < 0.0) {
        x = map_.apply_inverse(x);
        s += roof_at(x);
      } else {
        break;
      }
    }
    return make_state(x, s);
  }

  Vec advance(const Vec& state, double t) const {
    require(std::isfinite(t), "suspension1d: time must be finite");
    Vec moved = state;
    moved(moved.size() - 1) += t;
    return canonical(moved);
  }

  Vec velocity(const Vec&) const {
    Vec v = Vec::Zero(dim());
    v(dim() - 1) = 1.0;
    return v;
  }

  /// Bowen-Walters style two-link distance: one vertical move (in
  /// roof-normalized height) to a common fiber, then the fiber metric
  /// (1 - u) rho(x, y) + u rho(f x, f y). Symmetrized by taking both moves.
  double distance(const Vec& a, const Vec& b) const {
    return std::min(one_sided(a, b), one_sided(b, a));
  }

 private:
  double one_sided(const Vec& a, const Vec& b) const {
    const Vec xa = base_of(a), xb = base_of(b);
    const double ua = height_of(a) / roof_at(xa);
    const double ub = height_of(b) / roof_at(xb);
    const std::vector<BaseMap> gens{map_};
    Vec h(1);
    h << ua;
    double best = std::numeric_limits<double>::infinity();
    for (int k = -1; k <= 1; ++k) {
      const double lift = ua - ub + k;
      Vec moved = xb;
      if (k == 1) moved = map_.apply(xb);
      if (k == -1) moved = map_.apply_inverse(xb);
      best = std::min(best, std::abs(lift) + fiber_distance(gens, h, xa, moved));
    }
    return best;
  }

  BaseMap map_;
  ScalarFactor roof_;
};

}  // namespace flowcent
