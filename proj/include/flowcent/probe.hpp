#pragma once

// Falsification probes for expansiveness. A probe samples pairs of nearby
// points, aligns their orbits over a finite window by a monotone time map
// minimizing the largest distance, and reports the first pair that stays
// close without satisfying the conclusion of the definition under test.
// "No counterexample" only means none was found at the given resolution.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "flowcent/integrator.hpp"
#include "flowcent/optimize.hpp"
#include "flowcent/random.hpp"
#include "flowcent/suspension_flow.hpp"

namespace flowcent {

enum class MatchMode { identity, monotone_fix0, monotone_free };

inline std::string_view mode_name(MatchMode m) {
  switch (m) {
    case MatchMode::identity: return "identity";
    case MatchMode::monotone_fix0: return "monotone_fix0";
    case MatchMode::monotone_free: return "monotone_free";
  }
  return "?";
}

/// A point (t, h(t)) of a piecewise-linear alignment.
struct Breakpoint {
  double t = 0.0;
  double h = 0.0;
};

struct MatchResult {
  MatchMode mode = MatchMode::identity;
  /// Largest distance along the aligned pairs; +inf when no admissible
  /// alignment stays below the abort threshold.
  double cost = std::numeric_limits<double>::infinity();
  std::vector<Breakpoint> alignment;

  bool feasible() const { return std::isfinite(cost); }

  /// h(t) by linear interpolation (constant extrapolation is never needed
  /// inside the aligned range).
  double h(double t) const {
    require(!alignment.empty(), "alignment: empty");
    if (t <= alignment.front().t) return alignment.front().h;
    if (t >= alignment.back().t) return alignment.back().h;
    auto it = std::upper_bound(alignment.begin(), alignment.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.t; });
    const Breakpoint& b = *it;
    const Breakpoint& a = *(it - 1);
    return a.h + (b.h - a.h) * (t - a.t) / (b.t - a.t);
  }
};

/// Orbit samples on a uniform grid containing t = 0 exactly.
struct SampledOrbit {
  std::vector<double> times;
  std::vector<Vec> states;
  std::size_t center = 0;
};

/// Grid (k - c) * dt for k = 0..N-1, with c = round(back / dt).
inline std::vector<double> centered_grid(double back, double forward, double dt) {
  require(dt > 0 && back >= 0 && forward >= 0 && back + forward > 0, "grid: bad window");
  const auto c = static_cast<long>(std::llround(back / dt));
  const auto f = static_cast<long>(std::llround(forward / dt));
  std::vector<double> out;
  for (long k = -c; k <= f; ++k) out.push_back(static_cast<double>(k) * dt);
  return out;
}

inline std::size_t center_index(const std::vector<double>& times) {
  const auto it = std::find(times.begin(), times.end(), 0.0);
  require(it != times.end(), "orbit grid must contain t = 0");
  return static_cast<std::size_t>(it - times.begin());
}

template <FlowLike F>
SampledOrbit sample_on_grid(const F& f, const Vec& x, const std::vector<double>& times) {
  SampledOrbit out{times, {}, center_index(times)};
  if constexpr (std::is_same_v<F, OdeFlow>) {
    out.states.resize(times.size());
    const VectorField& field = f.field();
    {
      Integrator fwd(field, f.tolerance(), f.abs_scale());
      Vec y = field.domain().canonical(x);
      double t = 0.0;
      for (std::size_t k = out.center; k < times.size(); ++k) {
        y = fwd.advance(y, t, times[k]);
        t = times[k];
        out.states[k] = y;
      }
    }
    {
      Integrator bwd(field, f.tolerance(), f.abs_scale());
      Vec y = field.domain().canonical(x);
      double t = 0.0;
      for (std::size_t k = out.center; k-- > 0;) {
        y = bwd.advance(y, t, times[k]);
        t = times[k];
        out.states[k] = y;
      }
    }
  } else {
    out.states = sample_orbit(f, x, times);
  }
  return out;
}

/// The same flow integrated `factor` times more tightly (exact flows are
/// returned unchanged).
inline OdeFlow tighter(const OdeFlow& f, double factor) { return f.tightened(factor); }
template <FlowLike F>
F tighter(const F& f, double) {
  return f;
}

// ---------------------------------------------------------------------------
// Sup-cost monotone alignment.

struct MatchOptions {
  /// Maximal |i - j| of aligned grid indices; unset means unrestricted.
  std::optional<std::size_t> band;
  /// Cells whose bottleneck value reaches this are discarded; the search
  /// stops once a whole row is discarded.
  double abort_at = std::numeric_limits<double>::infinity();
};

namespace detail {

// Bottleneck dynamic programming over a banded N x N grid. Steps are
// (1,0), (0,1) and (1,1); the value of a path is its largest cell cost.
class BottleneckGrid {
 public:
  BottleneckGrid(std::size_t n, std::size_t band) : n_(n), w_(std::min(band, n)) {
    value_.assign(n_ * (2 * w_ + 1), kInf);
    pred_.assign(value_.size(), 0);
  }

  bool in_band(std::size_t i, std::size_t j) const { return (i > j ? i - j : j - i) <= w_; }
  double& value(std::size_t i, std::size_t j) { return value_[slot(i, j)]; }
  double value(std::size_t i, std::size_t j) const { return value_[slot(i, j)]; }
  std::uint8_t pred(std::size_t i, std::size_t j) const { return pred_[slot(i, j)]; }

  /// Fills cells of [lo, hi]^2. `source(i, j)` marks cells where a path may
  /// start (none in rows after `last_source_row`); `cost(i, j)` is evaluated
  /// lazily. Returns false on early abort.
  template <class Source, class Cost>
  bool run(std::size_t lo, std::size_t hi, std::size_t last_source_row, Source&& source, Cost&& cost, double abort_at) {
    for (std::size_t i = lo; i <= hi; ++i) {
      const std::size_t j0 = std::max(lo, i > w_ ? i - w_ : 0);
      const std::size_t j1 = std::min(hi, i + w_);
      bool any = false;
      for (std::size_t j = j0; j <= j1; ++j) {
        double best = kInf;
        std::uint8_t from = 0;
        // the diagonal wins ties, so equal-cost paths stay close to h = id
        if (i > lo && j > lo && value(i - 1, j - 1) < best) best = value(i - 1, j - 1), from = 3;
        if (i > lo && in_band(i - 1, j) && value(i - 1, j) < best) best = value(i - 1, j), from = 1;
        if (j > lo && in_band(i, j - 1) && value(i, j - 1) < best) best = value(i, j - 1), from = 2;
        double v = kInf;
        if (source(i, j)) {
          const double c = cost(i, j);
          v = c;
          from = 0;
        } else if (best < abort_at) {
          v = std::max(cost(i, j), best);
        }
        if (v >= abort_at) v = kInf;
        value(i, j) = v;
        pred_[slot(i, j)] = from;
        any = any || v < kInf;
      }
      if (!any && i >= last_source_row) return false;
    }
    return true;
  }

  /// Cells of the optimal path ending at (i, j), in increasing order.
  std::vector<std::pair<std::size_t, std::size_t>> trace(std::size_t i, std::size_t j) const {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (;;) {
      cells.emplace_back(i, j);
      const auto p = pred(i, j);
      if (p == 0) break;
      if (p == 1) --i;
      else if (p == 2) --j;
      else --i, --j;
    }
    std::reverse(cells.begin(), cells.end());
    return cells;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  std::size_t slot(std::size_t i, std::size_t j) const { return i * (2 * w_ + 1) + (j + w_ - i); }

  std::size_t n_, w_;
  std::vector<double> value_;
  std::vector<std::uint8_t> pred_;
};

inline std::vector<Breakpoint> to_breakpoints(const std::vector<std::pair<std::size_t, std::size_t>>& cells,
                                              const std::vector<double>& times, std::optional<std::size_t> pin) {
  std::vector<Breakpoint> pts;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [i, j] = cells[k];
    if (!pts.empty() && cells[k - 1].first == i) {
      if (pin && i == *pin && j == *pin) pts.back().h = times[j];
      continue;
    }
    pts.push_back({times[i], times[j]});
  }
  // drop interior points on a straight segment (t = 0 stays when pinned)
  std::vector<Breakpoint> out;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k > 0 && k + 1 < pts.size() && !(pin && pts[k].t == 0.0)) {
      const Breakpoint& a = out.back();
      const Breakpoint& c = pts[k + 1];
      const Breakpoint& b = pts[k];
      const double cross = (b.h - a.h) * (c.t - b.t) - (c.h - b.h) * (b.t - a.t);
      if (std::abs(cross) <= 1e-12 * (1.0 + std::abs(c.t - a.t)) * (1.0 + std::abs(c.h - a.h))) continue;
    }
    out.push_back(pts[k]);
  }
  return out;
}

}  // namespace detail

/// Best monotone alignment of two orbits sampled on the same grid.
/// Admissible paths start on the left or bottom edge within the first half
/// of the backward window and end on the right or top edge within the last
/// half of the forward window. Mode identity pins the diagonal; mode
/// monotone_fix0 forces the path through (0, 0). The feasible sets are
/// nested, so free <= fix0 <= identity exactly.
template <class Dist>
MatchResult monotone_match(const SampledOrbit& x, const SampledOrbit& y, Dist&& dist, MatchMode mode,
                           const MatchOptions& opt = {}) {
  if (x.times != y.times) throw ValidationError("monotone_match: grid mismatch");
  require(x.states.size() == x.times.size() && y.states.size() == y.times.size(), "monotone_match: bad orbit");
  const std::size_t n = x.times.size();
  require(n >= 2, "monotone_match: need at least two samples");
  const std::size_t c = x.center;
  MatchResult out;
  out.mode = mode;

  if (mode == MatchMode::identity) {
    double worst = 0;
    for (std::size_t k = 0; k < n && worst < opt.abort_at; ++k) worst = std::max(worst, dist(x.states[k], y.states[k]));
    if (worst >= opt.abort_at) return out;
    out.cost = worst;
    out.alignment = {{x.times.front(), x.times.front()}, {x.times.back(), x.times.back()}};
    return out;
  }

  const std::size_t start_lim = c / 2;
  const std::size_t end_lim = c + (n - 1 - c + 1) / 2;
  auto is_start = [&](std::size_t i, std::size_t j) { return (i == 0 && j <= start_lim) || (j == 0 && i <= start_lim); };
  auto is_end = [&](std::size_t i, std::size_t j) { return (i == n - 1 && j >= end_lim) || (j == n - 1 && i >= end_lim); };
  auto cost = [&](std::size_t i, std::size_t j) { return dist(x.states[i], y.states[j]); };
  detail::BottleneckGrid grid(n, opt.band.value_or(n));

  auto best_end = [&](const detail::BottleneckGrid& g, std::size_t lo) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    auto consider = [&](std::size_t i, std::size_t j) {
      if (i < lo || j < lo || !is_end(i, j) || !g.in_band(i, j)) return;
      if (!best || g.value(i, j) < g.value(best->first, best->second)) best = std::make_pair(i, j);
    };
    for (std::size_t k = end_lim; k < n; ++k) {
      consider(n - 1, k);
      consider(k, n - 1);
    }
    return best;
  };

  if (mode == MatchMode::monotone_free) {
    if (!grid.run(0, n - 1, start_lim, is_start, cost, opt.abort_at)) return out;
    const auto end = best_end(grid, 0);
    if (!end || !std::isfinite(grid.value(end->first, end->second))) return out;
    out.cost = grid.value(end->first, end->second);
    out.alignment = detail::to_breakpoints(grid.trace(end->first, end->second), x.times, std::nullopt);
    return out;
  }

  // fix0: two passes sharing the pinned cell (c, c)
  if (!grid.run(0, c, start_lim, is_start, cost, opt.abort_at) || !std::isfinite(grid.value(c, c))) return out;
  auto first = grid.trace(c, c);
  const double first_cost = grid.value(c, c);
  detail::BottleneckGrid second(n, opt.band.value_or(n));
  auto only_center = [&](std::size_t i, std::size_t j) { return i == c && j == c; };
  if (!second.run(c, n - 1, c, only_center, cost, opt.abort_at)) return out;
  const auto end = best_end(second, c);
  if (!end || !std::isfinite(second.value(end->first, end->second))) return out;
  auto rest = second.trace(end->first, end->second);
  out.cost = std::max(first_cost, second.value(end->first, end->second));
  first.insert(first.end(), rest.begin() + 1, rest.end());
  out.alignment = detail::to_breakpoints(first, x.times, c);
  return out;
}

/// Structural check: strictly increasing t, nondecreasing h, and the pins
/// of the mode.
inline bool valid_alignment(const MatchResult& m) {
  if (m.alignment.size() < 2) return false;
  for (std::size_t k = 1; k < m.alignment.size(); ++k) {
    if (!(m.alignment[k].t > m.alignment[k - 1].t) || m.alignment[k].h < m.alignment[k - 1].h) return false;
  }
  if (m.mode == MatchMode::monotone_fix0 && m.h(0.0) != 0.0) return false;
  if (m.mode == MatchMode::identity) {
    for (const auto& b : m.alignment)
      if (b.t != b.h) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Flow probes.

enum class Notion { komuro, kinematic, c_expansive };

inline std::string_view notion_name(Notion n) {
  switch (n) {
    case Notion::komuro: return "komuro";
    case Notion::kinematic: return "kinematic";
    case Notion::c_expansive: return "c-expansive";
  }
  return "?";
}

inline MatchMode mode_for(Notion n) {
  switch (n) {
    case Notion::komuro: return MatchMode::monotone_free;
    case Notion::kinematic: return MatchMode::identity;
    case Notion::c_expansive: return MatchMode::monotone_fix0;
  }
  return MatchMode::identity;
}

using PointSampler = std::function<Vec(Rng&)>;
using PairSampler = std::function<std::pair<Vec, Vec>(Rng&)>;

inline PointSampler uniform_torus(Eigen::Index dim) {
  return [dim](Rng& rng) { return rng.uniform_vec(dim); };
}

inline PointSampler uniform_box(Vec lo, Vec hi) {
  return [lo = std::move(lo), hi = std::move(hi)](Rng& rng) {
    Vec x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
    return x;
  };
}

inline PointSampler from_points(std::vector<Vec> points) {
  require(!points.empty(), "sampler: no points");
  return [pts = std::move(points)](Rng& rng) { return pts[rng.index(pts.size())]; };
}

/// y = x + r u with u a random unit vector and r uniform in [0.1, 1] * radius.
inline PairSampler nearby_pairs(PointSampler point, double radius) {
  require(radius > 0, "sampler: radius must be positive");
  return [point = std::move(point), radius](Rng& rng) {
    Vec x = point(rng);
    const double r = radius * rng.uniform(0.1, 1.0);
    Vec y = x + r * rng.direction(x.size());
    return std::make_pair(std::move(x), std::move(y));
  };
}

struct ProbeOptions {
  double eps = 0.1;
  double delta = 0.01;
  std::size_t pairs = 100;
  /// Forward window T.
  double horizon = 10.0;
  /// Backward window; defaults to the forward window.
  std::optional<double> back;
  double dt = 0.01;
  std::uint64_t seed = 0;
  /// Separation margins must exceed this.
  double sep_tol = 1e-6;
  /// Largest time shift |h(t) - t| considered by monotone modes; defaults
  /// to half the backward window.
  std::optional<double> max_shift;

  double backward() const { return back.value_or(horizon); }
  void validate() const {
    require(eps > 0 && delta > 0 && horizon > 0 && dt > 0 && sep_tol > 0, "probe: eps, delta, T, dt, sep_tol must be positive");
    require(backward() >= 0, "probe: backward window must be nonnegative");
    require(pairs >= 1, "probe: need at least one pair");
  }
};

struct Counterexample {
  Vec x, y;
  Notion notion = Notion::komuro;
  double horizon = 0.0, back = 0.0, dt = 0.0;
  double eps = 0.0, delta = 0.0;
  MatchResult alignment;
  /// delta minus the aligned cost.
  double closeness_margin = 0.0;
  /// Achieved separation from the conclusion of the definition.
  double separation = 0.0;
  std::size_t pair_index = 0;
};

struct ProbeReport {
  std::optional<Counterexample> counterexample;
  std::size_t pairs_tested = 0;
  /// Pairs whose alignment cost stayed below delta.
  std::size_t close_pairs = 0;
};

namespace detail {

// min over samples k in [lo, hi] of dist(target, x_k), refined around the
// best sample by golden section on the flow.
template <FlowLike F>
double distance_to_segment(const F& f, const SampledOrbit& orbit, std::size_t lo, std::size_t hi, const Vec& target) {
  std::size_t best_k = lo;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = lo; k <= hi; ++k) {
    const double d = f.distance(target, orbit.states[k]);
    if (d < best) best = d, best_k = k;
  }
  const std::size_t a = best_k > lo ? best_k - 1 : best_k;
  const std::size_t b = best_k < hi ? best_k + 1 : best_k;
  if (a == b) return best;
  const Vec& base = orbit.states[best_k];
  const double tb = orbit.times[best_k];
  const auto m = golden_section([&](double s) { return f.distance(target, f.advance(base, s - tb)); }, orbit.times[a],
                                orbit.times[b], 1e-10);
  return std::min(best, m.value);
}

inline std::pair<std::size_t, std::size_t> window(const SampledOrbit& o, double t_lo, double t_hi) {
  const auto lo = static_cast<std::size_t>(std::lower_bound(o.times.begin(), o.times.end(), t_lo - 1e-12) - o.times.begin());
  auto hi = static_cast<std::size_t>(std::upper_bound(o.times.begin(), o.times.end(), t_hi + 1e-12) - o.times.begin());
  hi = hi == 0 ? 0 : hi - 1;
  return {std::min(lo, o.times.size() - 1), hi};
}

// y at time s, from the nearest grid sample.
template <FlowLike F>
Vec state_near(const F& f, const SampledOrbit& o, double s) {
  const auto it = std::lower_bound(o.times.begin(), o.times.end(), s);
  std::size_t k = static_cast<std::size_t>(it - o.times.begin());
  if (k == o.times.size() || (k > 0 && s - o.times[k - 1] < o.times[k] - s)) --k;
  const double gap = s - o.times[k];
  return gap == 0.0 ? o.states[k] : f.advance(o.states[k], gap);
}

}  // namespace detail

/// Separation from the conclusion of the definition for an aligned pair.
/// Komuro: min over aligned t0 of dist(y_{h(t0)}, x_{[t0 - eps, t0 + eps]}).
/// Kinematic and C: min over |s| <= eps of dist(y, x_s).
template <FlowLike F>
double separation_margin(const F& f, Notion notion, const SampledOrbit& x, const SampledOrbit& y, const MatchResult& m,
                         double eps) {
  if (notion != Notion::komuro) {
    const auto [lo, hi] = detail::window(x, -eps, eps);
    return detail::distance_to_segment(f, x, lo, hi, y.states[y.center]);
  }
  // coarse pass on the grid, then refine candidates in increasing order
  const double t_lo = m.alignment.front().t, t_hi = m.alignment.back().t;
  std::vector<std::pair<double, std::size_t>> coarse;
  double step = 0;
  for (std::size_t k = 0; k + 1 < x.states.size(); ++k) step = std::max(step, f.distance(x.states[k], x.states[k + 1]));
  for (std::size_t k = 0; k < x.times.size(); ++k) {
    const double t0 = x.times[k];
    if (t0 < t_lo - 1e-12 || t0 > t_hi + 1e-12) continue;
    const Vec target = detail::state_near(f, y, m.h(t0));
    const auto [lo, hi] = detail::window(x, t0 - eps, t0 + eps);
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t j = lo; j <= hi; ++j) d = std::min(d, f.distance(target, x.states[j]));
    coarse.emplace_back(d, k);
  }
  std::sort(coarse.begin(), coarse.end());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [d, k] : coarse) {
    if (d - step >= best) break;
    const double t0 = x.times[k];
    const Vec target = detail::state_near(f, y, m.h(t0));
    const auto [lo, hi] = detail::window(x, t0 - eps, t0 + eps);
    best = std::min(best, detail::distance_to_segment(f, x, lo, hi, target));
  }
  return best;
}

/// Checks one pair; returns a counterexample when it violates the notion.
template <FlowLike F>
std::optional<Counterexample> check_pair(const F& f, Notion notion, const Vec& x0, const Vec& y0, const ProbeOptions& opt,
                                         bool* close = nullptr) {
  const auto times = centered_grid(opt.backward(), opt.horizon, opt.dt);
  const SampledOrbit x = sample_on_grid(f, x0, times);
  const SampledOrbit y = sample_on_grid(f, y0, times);
  MatchOptions mo;
  mo.abort_at = opt.delta;
  const double shift = opt.max_shift.value_or(opt.backward() / 2.0);
  mo.band = static_cast<std::size_t>(std::ceil(shift / opt.dt - 1e-9));
  auto dist = [&](const Vec& a, const Vec& b) { return f.distance(a, b); };
  const MatchResult m = monotone_match(x, y, dist, mode_for(notion), mo);
  if (!m.feasible() || m.cost >= opt.delta) return std::nullopt;
  if (close) *close = true;
  const double sep = separation_margin(f, notion, x, y, m, opt.eps);
  if (!(sep > opt.sep_tol)) return std::nullopt;
  Counterexample ce;
  ce.x = x.states[x.center];
  ce.y = y.states[y.center];
  ce.notion = notion;
  ce.horizon = opt.horizon;
  ce.back = opt.backward();
  ce.dt = opt.dt;
  ce.eps = opt.eps;
  ce.delta = opt.delta;
  ce.alignment = m;
  ce.closeness_margin = opt.delta - m.cost;
  ce.separation = sep;
  return ce;
}

template <FlowLike F>
ProbeReport violation_search(const F& f, Notion notion, const PairSampler& pairs, const ProbeOptions& opt) {
  opt.validate();
  Rng rng(opt.seed);
  ProbeReport report;
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    const auto [x, y] = pairs(rng);
    ++report.pairs_tested;
    bool close = false;
    if (auto ce = check_pair(f, notion, x, y, opt, &close)) {
      ce->pair_index = p;
      report.close_pairs += 1;
      report.counterexample = std::move(ce);
      return report;
    }
    if (close) ++report.close_pairs;
  }
  return report;
}

template <FlowLike F>
ProbeReport komuro_violation_search(const F& f, const PairSampler& pairs, const ProbeOptions& opt) {
  return violation_search(f, Notion::komuro, pairs, opt);
}
template <FlowLike F>
ProbeReport kinematic_violation_search(const F& f, const PairSampler& pairs, const ProbeOptions& opt) {
  return violation_search(f, Notion::kinematic, pairs, opt);
}
template <FlowLike F>
ProbeReport c_expansive_check(const F& f, const PairSampler& pairs, const ProbeOptions& opt) {
  return violation_search(f, Notion::c_expansive, pairs, opt);
}

struct Revalidation {
  bool holds = false;
  double closeness_margin = 0.0;
  double separation = 0.0;
};

/// Re-integrates both orbits `factor` times more tightly, re-evaluates the
/// recorded alignment (every grid time t against y at h(t)) and the
/// separation margin. Both margins must stay positive.
template <FlowLike F>
Revalidation revalidate(const F& f, const Counterexample& ce, double factor = 10.0, double sep_tol = 1e-6) {
  const F g = tighter(f, factor);
  const auto times = centered_grid(ce.back, ce.horizon, ce.dt);
  const SampledOrbit x = sample_on_grid(g, ce.x, times);
  const SampledOrbit y = sample_on_grid(g, ce.y, times);
  double worst = 0;
  const double t_lo = ce.alignment.alignment.front().t, t_hi = ce.alignment.alignment.back().t;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_lo - 1e-12 || times[k] > t_hi + 1e-12) continue;
    worst = std::max(worst, g.distance(x.states[k], detail::state_near(g, y, ce.alignment.h(times[k]))));
  }
  Revalidation r;
  r.closeness_margin = ce.delta - worst;
  r.separation = separation_margin(g, ce.notion, x, y, ce.alignment, ce.eps);
  r.holds = r.closeness_margin > 0 && r.separation > sep_tol;
  return r;
}

/// The three alignment costs of one pair on a common grid (no band, no abort).
struct CostTriple {
  double free = 0, fix0 = 0, identity = 0;
};

template <FlowLike F>
CostTriple alignment_costs(const F& f, const Vec& x0, const Vec& y0, double back, double horizon, double dt) {
  const auto times = centered_grid(back, horizon, dt);
  const SampledOrbit x = sample_on_grid(f, x0, times);
  const SampledOrbit y = sample_on_grid(f, y0, times);
  auto dist = [&](const Vec& a, const Vec& b) { return f.distance(a, b); };
  return {monotone_match(x, y, dist, MatchMode::monotone_free).cost,
          monotone_match(x, y, dist, MatchMode::monotone_fix0).cost,
          monotone_match(x, y, dist, MatchMode::identity).cost};
}

/// eps0 / 4 when a period bound is known, else a tenth of the diameter.
inline double default_eps(double eps0_upper, double diameter) {
  return std::isfinite(eps0_upper) ? eps0_upper / 4.0 : 0.1 * diameter;
}

// ---------------------------------------------------------------------------
// R^d-action probe.

template <class A>
concept ActionLike = requires(const A& a, const Vec& v, const Vec& x) {
  { a.rank() } -> std::convertible_to<int>;
  { a.act(v, x) } -> std::convertible_to<Vec>;
  { a.distance(x, x) } -> std::convertible_to<double>;
};

/// Componentwise monotone piecewise-linear map of R^d fixing 0.
struct PlMap {
  /// Per axis: knots (s, h(s)) sorted by s, including (0, 0); slopes outside
  /// the knot range continue the outermost segments.
  std::vector<std::vector<std::pair<double, double>>> axes;

  static PlMap identity(int d) {
    PlMap m;
    for (int i = 0; i < d; ++i) m.axes.push_back({{-1.0, -1.0}, {0.0, 0.0}, {1.0, 1.0}});
    return m;
  }

  /// K random knots per side with slopes in [1/stretch, stretch].
  static PlMap random(int d, int knots, double span, double stretch, Rng& rng) {
    PlMap m;
    for (int i = 0; i < d; ++i) {
      std::vector<std::pair<double, double>> ax{{0.0, 0.0}};
      for (int side : {1, -1}) {
        double s = 0, h = 0;
        for (int k = 0; k < knots; ++k) {
          const double ds = span / knots;
          const double slope = std::exp(rng.uniform(-1.0, 1.0) * std::log(stretch));
          s += side * ds;
          h += side * ds * slope;
          ax.emplace_back(s, h);
        }
      }
      std::sort(ax.begin(), ax.end());
      m.axes.push_back(ax);
    }
    return m;
  }

  Vec operator()(const Vec& v) const {
    Vec out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const auto& ax = axes[static_cast<std::size_t>(i)];
      const double s = v(i);
      std::size_t k = 1;
      while (k + 1 < ax.size() && ax[k].first < s) ++k;
      const auto& [s0, h0] = ax[k - 1];
      const auto& [s1, h1] = ax[k];
      out(i) = h0 + (h1 - h0) * (s - s0) / (s1 - s0);
    }
    return out;
  }
};

struct ActionProbeOptions {
  double eps = 0.1;
  double delta = 0.05;
  std::size_t pairs = 100;
  /// v ranges over the grid [-horizon, horizon]^d.
  double horizon = 10.0;
  double grid_step = 0.5;
  /// Random PL perturbations of the identity tried per pair.
  int h_maps = 4;
  int knots = 3;
  double stretch = 1.25;
  std::uint64_t seed = 0;
  double sep_tol = 1e-6;

  void validate() const {
    require(eps > 0 && delta > 0 && horizon > 0 && grid_step > 0 && sep_tol > 0, "action probe: parameters must be positive");
    require(pairs >= 1 && h_maps >= 0 && knots >= 1 && stretch >= 1.0, "action probe: bad sampling parameters");
  }
};

struct ActionCounterexample {
  Vec x, y;
  PlMap h;
  double horizon = 0, grid_step = 0, eps = 0, delta = 0;
  double closeness = 0;
  double separation = 0;
  std::size_t pair_index = 0;
};

struct ActionProbeReport {
  std::optional<ActionCounterexample> counterexample;
  std::size_t pairs_tested = 0;
  std::size_t close_pairs = 0;
};

namespace detail {

// Grid points of [-H, H]^d ordered by sup-norm shells, so separating pairs
// are rejected after a few evaluations.
inline std::vector<Vec> shell_grid(int d, double horizon, double step) {
  const auto half = static_cast<long>(std::floor(horizon / step + 1e-9));
  std::vector<std::pair<long, Vec>> pts;
  std::vector<long> k(static_cast<std::size_t>(d), -half);
  for (;;) {
    Vec v(d);
    long shell = 0;
    for (int i = 0; i < d; ++i) {
      v(i) = static_cast<double>(k[static_cast<std::size_t>(i)]) * step;
      shell = std::max(shell, std::abs(k[static_cast<std::size_t>(i)]));
    }
    pts.emplace_back(shell, v);
    int i = 0;
    while (i < d && ++k[static_cast<std::size_t>(i)] > half) {
      k[static_cast<std::size_t>(i)] = -half;
      ++i;
    }
    if (i == d) break;
  }
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Vec> out;
  out.reserve(pts.size());
  for (auto& p : pts) out.push_back(std::move(p.second));
  return out;
}

template <ActionLike A>
double action_closeness(const A& act, const Vec& x, const Vec& y, const PlMap& h, const std::vector<Vec>& grid,
                        double abort_at) {
  double worst = 0;
  for (const Vec& v : grid) {
    worst = std::max(worst, act.distance(act.act(v, x), act.act(h(v), y)));
    if (worst >= abort_at) return worst;
  }
  return worst;
}

}  // namespace detail

/// min over |v0| <= eps of dist(Phi_{v0} x, y): grid over the ball, then
/// Nelder-Mead from the best grid point (clamped to the ball).
template <ActionLike A>
double action_separation(const A& act, const Vec& x, const Vec& y, double eps) {
  const int d = act.rank();
  const int per_axis = d <= 2 ? 21 : 7;
  auto clamp = [&](Vec v) {
    const double n = v.norm();
    return n > eps ? Vec(v * (eps / n)) : v;
  };
  auto f = [&](const Vec& v) { return act.distance(act.act(clamp(v), x), y); };
  Vec best = Vec::Zero(d);
  double best_val = f(best);
  std::vector<long> k(static_cast<std::size_t>(d), 0);
  for (;;) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = -eps + 2.0 * eps * static_cast<double>(k[static_cast<std::size_t>(i)]) / (per_axis - 1);
    if (v.norm() <= eps) {
      const double val = f(v);
      if (val < best_val) best_val = val, best = v;
    }
    int i = 0;
    while (i < d && ++k[static_cast<std::size_t>(i)] >= per_axis) {
      k[static_cast<std::size_t>(i)] = 0;
      ++i;
    }
    if (i == d) break;
  }
  const auto refined = nelder_mead(f, best, eps / per_axis, 1e-15, 1e-12, 600);
  return std::min(best_val, refined.value);
}

template <ActionLike A>
ActionProbeReport action_violation_search(const A& act, const PairSampler& pairs, const ActionProbeOptions& opt) {
  opt.validate();
  Rng rng(opt.seed);
  const int d = act.rank();
  const auto grid = detail::shell_grid(d, opt.horizon, opt.grid_step);
  ActionProbeReport report;
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    const auto [x, y] = pairs(rng);
    ++report.pairs_tested;
    std::vector<PlMap> family{PlMap::identity(d)};
    for (int k = 0; k < opt.h_maps; ++k) family.push_back(PlMap::random(d, opt.knots, opt.horizon, opt.stretch, rng));
    for (const PlMap& h : family) {
      const double close = detail::action_closeness(act, x, y, h, grid, opt.delta);
      if (close >= opt.delta) continue;
      ++report.close_pairs;
      const double sep = action_separation(act, x, y, opt.eps);
      if (sep > opt.sep_tol) {
        report.counterexample = ActionCounterexample{x, y, h, opt.horizon, opt.grid_step, opt.eps, opt.delta, close, sep, p};
        return report;
      }
      break;
    }
  }
  return report;
}

/// Re-checks an action counterexample on a grid `refine` times finer.
template <ActionLike A>
Revalidation revalidate(const A& act, const ActionCounterexample& ce, int refine = 2, double sep_tol = 1e-6) {
  const auto grid = detail::shell_grid(act.rank(), ce.horizon, ce.grid_step / refine);
  Revalidation r;
  r.closeness_margin = ce.delta - detail::action_closeness(act, ce.x, ce.y, ce.h, grid, ce.delta);
  r.separation = action_separation(act, ce.x, ce.y, ce.eps);
  r.holds = r.closeness_margin > 0 && r.separation > sep_tol;
  return r;
}

}  // namespace flowcent
