#pragma once

// Adaptive Dormand-Prince 5(4) integration of VectorField flows, sampled
// trajectories, and the FlowLike interface shared by the probes.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <sstream>
#include <vector>

#include "flowcent/field.hpp"

namespace flowcent {

inline constexpr double kDefaultTolInt = 1e-10;

/// Anything that behaves like a flow on a metric space.
template <class F>
concept FlowLike = requires(const F& f, const Vec& x, double t) {
  { f.dim() } -> std::convertible_to<Eigen::Index>;
  { f.advance(x, t) } -> std::convertible_to<Vec>;
  { f.distance(x, x) } -> std::convertible_to<double>;
  { f.velocity(x) } -> std::convertible_to<Vec>;
};

namespace detail {

// Dormand & Prince (1980) tableau.
struct DoPri {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Stateful stepper for one field; carries the last accepted step size
/// between calls so that sequential segments restart cheaply.
class Integrator {
 public:
  /// `abs_scale` shrinks the absolute part of the error control, for orbits
  /// living at a small scale (near a singularity).
  explicit Integrator(const VectorField& field, double tol = kDefaultTolInt, double abs_scale = 1.0)
      : field_(&field), tol_(tol), abs_scale_(abs_scale) {
    require(tol > 0 && std::isfinite(tol), "integrator: tol_int must be positive");
    require(abs_scale > 0 && abs_scale <= 1.0, "integrator: abs_scale must lie in (0, 1]");
  }

  double tolerance() const { return tol_; }

  /// State at time t_to starting from x at t_from.
  Vec advance(const Vec& x0, double t_from, double t_to) {
    require(x0.size() == field_->dim(), "integrator: state dimension mismatch");
    require(x0.allFinite(), "integrator: non-finite initial state");
    const Domain& dom = field_->domain();
    Vec x = dom.canonical(x0);
    if (t_to == t_from) return x;
    const double dir = t_to > t_from ? 1.0 : -1.0;
    // local tolerance a notch below the global target
    const double rtol = 0.05 * tol_, atol = 0.05 * tol_ * abs_scale_;
    double t = t_from;
    double h = h_guess_ > 0 ? h_guess_ : initial_step(x, rtol, atol);
    Vec k1 = field_->eval(x);
    using T = detail::DoPri;
    const Eigen::Index n = x.size();
    Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), err(n);
    long steps = 0;
    while (dir * (t_to - t) > 0) {
      const double remaining = std::abs(t_to - t);
      bool last = false;
      if (h >= remaining) {
        h = remaining;
        last = true;
      }
      const double hs = dir * h;
      k2 = field_->eval(x + hs * T::a21 * k1);
      k3 = field_->eval(x + hs * (T::a31 * k1 + T::a32 * k2));
      k4 = field_->eval(x + hs * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
      k5 = field_->eval(x + hs * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
      k6 = field_->eval(x + hs * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));
      y = x + hs * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
      k7 = field_->eval(y);
      err = hs * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
      double e = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double sc = atol + rtol * std::max(std::abs(x(i)), std::abs(y(i)));
        e = std::max(e, std::abs(err(i)) / sc);
      }
      if (!std::isfinite(e) || !y.allFinite()) e = 1e10;
      if (e <= 1.0) {
        t = last ? t_to : t + hs;
        x = dom.any_periodic() ? dom.canonical(y) : y;
        k1 = k7;
        if (!last) h_guess_ = h;
        const double fac = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
        h *= fac;
      } else {
        h *= std::clamp(0.9 * std::pow(e, -0.2), 0.1, 0.9);
      }
      if ((dir * (t_to - t) > 0 && h < 1e-13 * std::max(1.0, std::abs(t))) || ++steps > kMaxSteps) {
        std::ostringstream os;
        os << "integrator: step size underflow or step budget exhausted; last reachable time " << t;
        throw NumericalError(os.str());
      }
    }
    return x;
  }

 private:
  static constexpr long kMaxSteps = 20'000'000;

  double initial_step(const Vec& x, double rtol, double atol) const {
    const Vec f = field_->eval(x);
    const double fn = f.cwiseAbs().maxCoeff();
    const double xn = x.cwiseAbs().maxCoeff();
    if (fn == 0.0) return 1e-2;
    return std::clamp(0.01 * (atol + rtol * xn) / fn * 1e3, 1e-6, 1e-1);
  }

  const VectorField* field_;
  double tol_;
  double abs_scale_;
  double h_guess_ = 0.0;
};

/// phi_t(x0) for the flow of `field`.
inline Vec flow(const VectorField& field, const Vec& x0, double t, double tol_int = kDefaultTolInt,
                double abs_scale = 1.0) {
  Integrator integ(field, tol_int, abs_scale);
  return integ.advance(x0, 0.0, t);
}

/// The flow of a VectorField as a FlowLike value.
class OdeFlow {
 public:
  explicit OdeFlow(VectorField field, double tol_int = kDefaultTolInt, double abs_scale = 1.0)
      : field_(std::move(field)), tol_(tol_int), abs_scale_(abs_scale) {}

  Eigen::Index dim() const { return field_.dim(); }
  Vec advance(const Vec& x, double t) const { return flow(field_, x, t, tol_, abs_scale_); }
  double distance(const Vec& a, const Vec& b) const { return field_.domain().distance(a, b); }
  Vec velocity(const Vec& x) const { return field_.eval(x); }
  Vec canonical(const Vec& x) const { return field_.domain().canonical(x); }

  const VectorField& field() const { return field_; }
  double tolerance() const { return tol_; }
  double abs_scale() const { return abs_scale_; }
  OdeFlow tightened(double factor) const { return OdeFlow(field_, tol_ / factor, abs_scale_); }
  OdeFlow at_scale(double abs_scale) const { return OdeFlow(field_, tol_, abs_scale); }

 private:
  VectorField field_;
  double tol_;
  double abs_scale_;
};

/// Uniform output grid t0, t0 + dt, ..., t1 (the last spacing may be shorter).
inline std::vector<double> output_grid(double t0, double t1, double dt_out) {
  require(t0 < t1, "trajectory: need t0 < t1");
  require(dt_out > 0, "trajectory: dt_out must be positive");
  const auto steps = static_cast<long>(std::ceil((t1 - t0) / dt_out - 1e-9));
  std::vector<double> ts;
  ts.reserve(static_cast<std::size_t>(steps) + 1);
  for (long k = 0; k < steps; ++k) ts.push_back(t0 + static_cast<double>(k) * dt_out);
  ts.push_back(t1);
  return ts;
}

/// Time-stamped orbit samples of a vector field flow.
struct Trajectory {
  VectorField field;
  double t0 = 0.0;
  double t1 = 0.0;
  double dt_out = 0.0;
  double tol_int = kDefaultTolInt;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> derivatives;

  std::size_t size() const { return times.size(); }

  std::size_t segment(double t) const {
    require(t >= t0 - 1e-12 && t <= t1 + 1e-12, "trajectory: time outside [t0, t1]");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    return std::min(k, times.size() - 2);
  }

  /// Cubic Hermite interpolation from stored states and derivatives.
  Vec hermite(double t) const {
    const std::size_t k = segment(t);
    const double h = times[k + 1] - times[k];
    const double s = (t - times[k]) / h;
    const Vec& p0 = states[k];
    const Vec p1 = p0 + field.domain().difference(p0, states[k + 1]);
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return field.domain().canonical(h00 * p0 + h10 * h * derivatives[k] + h01 * p1 +
                                    h11 * h * derivatives[k + 1]);
  }

  /// Dense output: re-integrates from the nearest stored sample, so the
  /// result agrees with a direct flow() call to integrator accuracy.
  Vec state_at(double t) const {
    const std::size_t k = segment(t);
    const std::size_t near = (t - times[k] <= times[k + 1] - t) ? k : k + 1;
    Integrator integ(field, tol_int);
    return integ.advance(states[near], times[near], t);
  }
};

/// Samples the orbit of x0 (the state at time 0) on the grid of [t0, t1].
inline Trajectory trajectory(const VectorField& field, const Vec& x0, double t0, double t1, double dt_out,
                             double tol_int = kDefaultTolInt) {
  Trajectory tr{field, t0, t1, dt_out, tol_int, output_grid(t0, t1, dt_out), {}, {}};
  tr.states.resize(tr.times.size());
  tr.derivatives.resize(tr.times.size());
  const auto first_nonneg = static_cast<std::size_t>(
      std::lower_bound(tr.times.begin(), tr.times.end(), 0.0) - tr.times.begin());
  {
    Integrator fwd(field, tol_int);
    Vec x = field.domain().canonical(x0);
    double t = 0.0;
    for (std::size_t k = first_nonneg; k < tr.times.size(); ++k) {
      x = fwd.advance(x, t, tr.times[k]);
      t = tr.times[k];
      tr.states[k] = x;
    }
  }
  {
    Integrator bwd(field, tol_int);
    Vec x = field.domain().canonical(x0);
    double t = 0.0;
    for (std::size_t k = first_nonneg; k-- > 0;) {
      x = bwd.advance(x, t, tr.times[k]);
      t = tr.times[k];
      tr.states[k] = x;
    }
  }
  for (std::size_t k = 0; k < tr.times.size(); ++k) tr.derivatives[k] = field.eval(tr.states[k]);
  return tr;
}

/// States of a generic flow on the grid of [t0, t1] (x0 is the state at 0).
template <FlowLike F>
std::vector<Vec> sample_orbit(const F& f, const Vec& x0, const std::vector<double>& times) {
  std::vector<Vec> out(times.size());
  const auto first_nonneg =
      static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), 0.0) - times.begin());
  Vec x = x0;
  double t = 0.0;
  for (std::size_t k = first_nonneg; k < times.size(); ++k) {
    x = f.advance(x, times[k] - t);
    t = times[k];
    out[k] = x;
  }
  x = x0;
  t = 0.0;
  for (std::size_t k = first_nonneg; k-- > 0;) {
    x = f.advance(x, times[k] - t);
    t = times[k];
    out[k] = x;
  }
  return out;
}

}  // namespace flowcent
