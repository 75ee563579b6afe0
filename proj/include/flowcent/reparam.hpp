#pragma once

// Recovery of the time change between two commuting flows: the local
// matching function z(s, x) on a short window, its dyadic extension p(t, x)
// to all times, the orbit-invariant slope A(x) and the resulting verdicts.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowcent/integrator.hpp"
#include "flowcent/optimize.hpp"
#include "flowcent/spectra.hpp"

namespace flowcent {

inline constexpr double kDefaultTolMatch = 1e-8;
inline constexpr double kDefaultTolA = 1e-4;

/// A failed orbit match: psi_s(x) is not on the phi-orbit segment of x.
class MatchFailure : public NumericalError {
 public:
  MatchFailure(const std::string& what, double s, double distance)
      : NumericalError(what), s_(s), distance_(distance) {}
  double s() const { return s_; }
  double distance() const { return distance_; }

 private:
  double s_;
  double distance_;
};

struct ReparamOptions {
  /// Half-width of the window [-mu, mu] on which z is matched directly.
  double mu = 0.05;
  /// |z| must stay below this (a third of the shortest period, or a cap).
  double eps_cap = 0.3;
  double tol_match = kDefaultTolMatch;
  int scan_points = 64;
  /// Dyadic level N of the extension, step 2^-N; smallest with 2^-N < mu when unset.
  std::optional<int> level;
  /// Check psi_t(x) = phi_p(x) to tol_match (1 + |t|) after extending. The
  /// identity is also tested as the round trip phi_{-p}(psi_t(x)) = x, and the
  /// smaller residual decides: long backward runs of a strongly dissipative
  /// field lose accuracy in one frame but not in the other.
  bool verify_extension = true;

  int dyadic_level() const {
    if (level) {
      require(std::ldexp(1.0, -*level) < mu, "reparam: dyadic step must be shorter than the window");
      return *level;
    }
    int n = 0;
    while (std::ldexp(1.0, -n) >= mu) ++n;
    return n;
  }

  void validate() const {
    require(mu > 0 && std::isfinite(mu), "reparam: mu must be positive");
    require(eps_cap > 0 && std::isfinite(eps_cap), "reparam: eps_cap must be positive");
    require(tol_match > 0, "reparam: tol_match must be positive");
    require(scan_points >= 8, "reparam: scan_points must be at least 8");
  }
};

/// eps_cap from the probed minimal period: just under a third of it, or the
/// fallback when no period was found.
inline double eps_cap_for(double eps0_upper, double fallback_cap) {
  require(fallback_cap > 0, "eps_cap_for: fallback cap must be positive");
  if (!std::isfinite(eps0_upper)) return fallback_cap;
  return std::min(fallback_cap, 0.99 * eps0_upper / 3.0);
}

struct LocalMatch {
  double z = 0.0;
  double residual = 0.0;
};

namespace detail {

template <FlowLike Phi>
ScalarMin match_in_bracket(const Phi& phi, const Vec& x, const Vec& target, double a, double b) {
  const Vec base = phi.advance(x, a);
  auto dist = [&](double tau) { return phi.distance(phi.advance(base, tau - a), target); };
  return golden_section(dist, a, b, 1e-15 * std::max(1.0, std::abs(b)) + 1e-16);
}

template <FlowLike Phi>
ScalarMin match_by_scan(const Phi& phi, const Vec& x, const Vec& target, double cap, int points) {
  const double step = 2.0 * cap / points;
  Vec cur = phi.advance(x, -cap + step);
  double best = std::numeric_limits<double>::infinity();
  int best_i = 1;
  for (int i = 1; i < points; ++i) {
    if (i > 1) cur = phi.advance(cur, step);
    const double d = phi.distance(cur, target);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  const double lo = -cap + step * (best_i - 1);
  const double hi = -cap + step * (best_i + 1);
  return match_in_bracket(phi, x, target, std::max(lo, -cap), std::min(hi, cap));
}

}  // namespace detail

/// z(s, x): the phi-time with phi_z(x) = psi_s(x), |z| < eps_cap. A hint
/// (for example the previous dyadic step) is tried first in a narrow
/// bracket; the full scan of (-eps_cap, eps_cap) is the fallback.
template <FlowLike Phi, FlowLike Psi>
LocalMatch local_reparam(const Phi& phi, const Psi& psi, const Vec& x, double s, const ReparamOptions& opt,
                         std::optional<double> hint = std::nullopt) {
  opt.validate();
  require(std::abs(s) <= opt.mu * (1.0 + 1e-12), "local_reparam: |s| exceeds the window mu");
  require(phi.velocity(x).norm() > 1e-300, "local_reparam: x is a singularity of phi");
  if (s == 0.0) return {0.0, 0.0};
  const Vec target = psi.advance(x, s);
  std::optional<ScalarMin> found;
  if (hint && std::abs(*hint) < opt.eps_cap) {
    const double w = 0.05 * std::abs(*hint) + 0.02 * opt.eps_cap;
    const double a = std::max(*hint - w, -opt.eps_cap), b = std::min(*hint + w, opt.eps_cap);
    const auto m = detail::match_in_bracket(phi, x, target, a, b);
    const double margin = 1e-6 * (b - a);
    if (m.value <= opt.tol_match && m.x > a + margin && m.x < b - margin) found = m;
  }
  if (!found) found = detail::match_by_scan(phi, x, target, opt.eps_cap, opt.scan_points);
  if (found->value > opt.tol_match) {
    std::ostringstream os;
    os << "not a reparameterization at s = " << s << ": orbit distance " << found->value << " exceeds tol_match "
       << opt.tol_match;
    throw MatchFailure(os.str(), s, found->value);
  }
  if (!(std::abs(found->x) < opt.eps_cap)) {
    throw MatchFailure("local_reparam: matched time reaches eps_cap", s, found->value);
  }
  return {found->x, found->value};
}

/// p(t, x) by the dyadic recursion
///   z_k(t, x) = z_{k-1}(t - h, x) + z(h, psi(t - h, x)),  h = 2^-N,
/// unrolled from the remainder r = t - k h.
template <FlowLike Phi, FlowLike Psi>
double extend_reparam(const Phi& phi, const Psi& psi, const Vec& x, double t, const ReparamOptions& opt) {
  opt.validate();
  require(std::isfinite(t), "extend_reparam: t must be finite");
  const double h = std::ldexp(1.0, -opt.dyadic_level());
  const double dir = t < 0 ? -1.0 : 1.0;
  const double span = std::abs(t);
  const auto k = static_cast<long>(std::floor(span / h));
  const double r = span - static_cast<double>(k) * h;

  double p = local_reparam(phi, psi, x, dir * r, opt).z;
  Vec y = r == 0.0 ? x : psi.advance(x, dir * r);
  std::optional<double> hint;
  for (long j = 0; j < k; ++j) {
    LocalMatch m;
    try {
      m = local_reparam(phi, psi, y, dir * h, opt, hint);
    } catch (const MatchFailure& e) {
      std::ostringstream os;
      os << "extend_reparam: dyadic step " << j << " of " << k << " failed (" << e.what() << ")";
      throw MatchFailure(os.str(), dir * (r + j * h), e.distance());
    }
    p += m.z;
    hint = m.z;
    y = psi.advance(y, dir * h);
  }
  if (opt.verify_extension) {
    const Vec end = psi.advance(x, t);
    double miss = phi.distance(end, phi.advance(x, p));
    if (miss > opt.tol_match * (1.0 + span)) miss = std::min(miss, phi.distance(phi.advance(end, -p), x));
    if (miss > opt.tol_match * (1.0 + span)) {
      std::ostringstream os;
      os << "extend_reparam: psi_t(x) and phi_p(x) differ by " << miss << " at t = " << t;
      throw MatchFailure(os.str(), t, miss);
    }
  }
  return p;
}

struct SlopeFit {
  double A = 0.0;
  double linearity_residual = 0.0;
};

/// Least-squares slope of p(t, x) against t through the origin.
template <FlowLike Phi, FlowLike Psi>
SlopeFit estimate_A(const Phi& phi, const Psi& psi, const Vec& x, const std::vector<double>& t_grid,
                    const ReparamOptions& opt) {
  require(!t_grid.empty(), "estimate_A: empty time grid");
  std::vector<double> ps;
  double num = 0, den = 0;
  for (double t : t_grid) {
    const double p = extend_reparam(phi, psi, x, t, opt);
    ps.push_back(p);
    num += p * t;
    den += t * t;
  }
  require(den > 0, "estimate_A: time grid must contain a nonzero time");
  SlopeFit fit{num / den, 0.0};
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    fit.linearity_residual = std::max(fit.linearity_residual, std::abs(ps[i] - fit.A * t_grid[i]));
  return fit;
}

/// max |p(t + s, x) - p(t, x) - p(s, psi_t(x))| over the given (t, s) pairs.
template <FlowLike Phi, FlowLike Psi>
double cocycle_residual(const Phi& phi, const Psi& psi, const Vec& x,
                        const std::vector<std::pair<double, double>>& pairs, const ReparamOptions& opt) {
  double worst = 0;
  for (const auto& [t, s] : pairs) {
    const double lhs = extend_reparam(phi, psi, x, t + s, opt);
    const double a = extend_reparam(phi, psi, x, t, opt);
    const double b = extend_reparam(phi, psi, psi.advance(x, t), s, opt);
    worst = std::max(worst, std::abs(lhs - a - b));
  }
  return worst;
}

/// max |p(t, x) - p(t, phi_s(x))| over t in `times` and s in `shifts`.
template <FlowLike Phi, FlowLike Psi>
double p_orbit_residual(const Phi& phi, const Psi& psi, const Vec& x, const std::vector<double>& times,
                        const std::vector<double>& shifts, const ReparamOptions& opt) {
  double worst = 0;
  for (double t : times) {
    const double here = extend_reparam(phi, psi, x, t, opt);
    for (double s : shifts) {
      worst = std::max(worst, std::abs(here - extend_reparam(phi, psi, phi.advance(x, s), t, opt)));
    }
  }
  return worst;
}

/// max |A(phi_t x) - A(x)| over samples and check times.
template <FlowLike Phi, FlowLike Psi>
double verify_orbit_invariance(const Phi& phi, const Psi& psi, const std::vector<Vec>& samples,
                               const std::vector<double>& t_checks, const std::vector<double>& t_grid,
                               const ReparamOptions& opt) {
  double worst = 0;
  for (const Vec& x : samples) {
    const double a0 = estimate_A(phi, psi, x, t_grid, opt).A;
    for (double t : t_checks) {
      worst = std::max(worst, std::abs(estimate_A(phi, psi, phi.advance(x, t), t_grid, opt).A - a0));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Verdicts.

struct TrivialityVerdict {
  enum class Kind { trivial, quasi_trivial, inconclusive };
  Kind kind = Kind::inconclusive;
  std::optional<double> constant;
  std::string reason;

  std::string name() const {
    switch (kind) {
      case Kind::trivial:
        return "trivial";
      case Kind::quasi_trivial:
        return "quasi-trivial";
      default:
        return "inconclusive";
    }
  }
};

struct ReparamSample {
  Vec point;
  double A = 0.0;
  double linearity_residual = 0.0;
  /// max |A(phi_t x) - A(x)| over the check times.
  double invariance_residual = 0.0;
};

struct ReparamField {
  std::vector<ReparamSample> samples;
  double orbit_invariance_residual = 0.0;
  double linearity_residual = 0.0;
  /// Largest |t| in the fitting grid; linearity is judged relative to it.
  double t_scale = 1.0;
  TrivialityVerdict verdict;
};

struct TrivialityHint {
  /// Set when the stable manifolds of singularities are known to be dense,
  /// in which case A must be constant and a varying A is suspicious.
  bool stable_manifold_dense = false;
};

inline TrivialityVerdict triviality_verdict(const ReparamField& field, TrivialityHint hint = {},
                                            double tol_A = kDefaultTolA) {
  TrivialityVerdict v;
  if (field.samples.empty()) {
    v.reason = "no samples";
    return v;
  }
  if (!(field.orbit_invariance_residual <= tol_A)) {
    v.reason = "orbit invariance residual above tol_A";
    return v;
  }
  if (!(field.linearity_residual <= tol_A * std::max(1.0, field.t_scale))) {
    v.reason = "p(t, x) is not linear in t";
    return v;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : field.samples) {
    lo = std::min(lo, s.A);
    hi = std::max(hi, s.A);
  }
  if (0.5 * (hi - lo) <= tol_A) {
    v.kind = TrivialityVerdict::Kind::trivial;
    v.constant = 0.5 * (hi + lo);
    v.reason = "A is constant on the samples";
  } else if (hint.stable_manifold_dense) {
    v.reason = "A varies although dense stable manifolds force it to be constant";
  } else {
    v.kind = TrivialityVerdict::Kind::quasi_trivial;
    v.reason = "A is orbit invariant but not constant";
  }
  return v;
}

/// Samples A on `points` and measures its residuals.
template <FlowLike Phi, FlowLike Psi>
ReparamField build_reparam_field(const Phi& phi, const Psi& psi, const std::vector<Vec>& points,
                                 const std::vector<double>& t_grid, const std::vector<double>& t_checks,
                                 const ReparamOptions& opt, TrivialityHint hint = {},
                                 double tol_A = kDefaultTolA) {
  ReparamField out;
  for (double t : t_grid) out.t_scale = std::max(out.t_scale, std::abs(t));
  for (const Vec& x : points) {
    const auto fit = estimate_A(phi, psi, x, t_grid, opt);
    ReparamSample sample{x, fit.A, fit.linearity_residual, 0.0};
    for (double t : t_checks) {
      const double moved = estimate_A(phi, psi, phi.advance(x, t), t_grid, opt).A;
      sample.invariance_residual = std::max(sample.invariance_residual, std::abs(moved - fit.A));
    }
    out.linearity_residual = std::max(out.linearity_residual, fit.linearity_residual);
    out.orbit_invariance_residual = std::max(out.orbit_invariance_residual, sample.invariance_residual);
    out.samples.push_back(std::move(sample));
  }
  out.verdict = triviality_verdict(out, hint, tol_A);
  return out;
}

// ---------------------------------------------------------------------------
// Window choice and commutation.

/// Starts from min(eps0_upper / 10, eps_cap) and halves mu until every sample
/// matches at s = +-mu with |z| at most half the cap.
template <FlowLike Phi, FlowLike Psi>
ReparamOptions choose_window(const Phi& phi, const Psi& psi, const std::vector<Vec>& samples, double eps0_upper,
                             double fallback_cap, double tol_match = kDefaultTolMatch) {
  require(!samples.empty(), "choose_window: no samples");
  ReparamOptions opt;
  opt.tol_match = tol_match;
  opt.eps_cap = eps_cap_for(eps0_upper, fallback_cap);
  opt.mu = std::isfinite(eps0_upper) ? std::min(eps0_upper / 10.0, opt.eps_cap) : opt.eps_cap;
  for (int attempt = 0; attempt < 40; ++attempt) {
    bool ok = true;
    for (const Vec& x : samples) {
      for (double s : {-opt.mu, opt.mu}) {
        try {
          if (std::abs(local_reparam(phi, psi, x, s, opt).z) > 0.5 * opt.eps_cap) ok = false;
        } catch (const MatchFailure&) {
          ok = false;
        }
        if (!ok) break;
      }
      if (!ok) break;
    }
    if (ok) return opt;
    opt.mu *= 0.5;
  }
  throw NumericalError("choose_window: no window found where psi matches phi");
}

struct CommutationCheck {
  double bracket = 0.0;
  double flow_defect = 0.0;
  bool commuting = false;
};

/// Bracket test and flow-commutation test |psi_s phi_t x - phi_t psi_s x|.
inline CommutationCheck check_commuting(const VectorField& x_field, const VectorField& y_field,
                                        const std::vector<Vec>& samples, const std::vector<double>& times,
                                        double tol_int = kDefaultTolInt, double tol = 1e-6) {
  const OdeFlow phi(x_field, tol_int), psi(y_field, tol_int);
  CommutationCheck c;
  for (const Vec& x : samples) {
    c.bracket = std::max(c.bracket, lie_bracket(x_field, y_field, x).norm());
    for (double t : times) {
      for (double s : times) {
        const Vec a = psi.advance(phi.advance(x, t), s);
        const Vec b = phi.advance(psi.advance(x, s), t);
        c.flow_defect = std::max(c.flow_defect, phi.distance(a, b));
      }
    }
  }
  c.commuting = c.bracket <= tol && c.flow_defect <= tol;
  return c;
}

// ---------------------------------------------------------------------------
// Extension of A to a hyperbolic singularity.

struct SingularityExtension {
  double A_at_sigma = 0.0;
  double spread = 0.0;
  std::optional<double> stable_mean;
  std::optional<double> unstable_mean;
  std::vector<double> stable_values;
  std::vector<double> unstable_values;
};

/// Evaluates A at sigma + 10^-k v (k = 1..6) for unit vectors v spanning the
/// stable and unstable bundles, both signs. Integration and matching
/// tolerances scale with the distance to sigma.
inline SingularityExtension singularity_extension_check(const OdeFlow& phi, const OdeFlow& psi,
                                                        const SingularityReport& report,
                                                        const std::vector<double>& t_grid,
                                                        const ReparamOptions& opt) {
  if (!report.hyperbolic) throw ValidationError("singularity_extension_check: singularity is not hyperbolic");
  if (!report.nonresonant()) {
    throw ValidationError(
        "singularity_extension_check: a bundle is resonant, continuity of A at the singularity is not guaranteed");
  }
  SingularityExtension out;
  auto family = [&](const Mat& basis, std::vector<double>& values) {
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
      const Vec dir = basis.col(c).normalized();
      for (double sgn : {1.0, -1.0}) {
        for (int k = 1; k <= 6; ++k) {
          const double scale = std::pow(10.0, -k);
          ReparamOptions local = opt;
          local.tol_match = opt.tol_match * scale;
          const OdeFlow phi_s = phi.at_scale(scale), psi_s = psi.at_scale(scale);
          const Vec x = report.location + sgn * scale * dir;
          values.push_back(estimate_A(phi_s, psi_s, x, t_grid, local).A);
        }
      }
    }
  };
  family(report.stable_basis, out.stable_values);
  family(report.unstable_basis, out.unstable_values);
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
  };
  out.stable_mean = mean(out.stable_values);
  out.unstable_mean = mean(out.unstable_values);
  std::vector<double> all = out.stable_values;
  all.insert(all.end(), out.unstable_values.begin(), out.unstable_values.end());
  out.A_at_sigma = *mean(all);
  for (double a : all) out.spread = std::max(out.spread, std::abs(a - out.A_at_sigma));
  return out;
}

}  // namespace flowcent
