#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "flowcent/integrator.hpp"
#include "flowcent/optimize.hpp"

namespace flowcent {

struct PeriodWitness {
  Vec point;
  double period = 0.0;
  double return_distance = 0.0;
};

struct PeriodProbeResult {
  /// Smallest refined period found; an upper bound on the minimal period
  /// of regular periodic orbits, +inf when nothing closed up.
  double eps0_upper = std::numeric_limits<double>::infinity();
  std::optional<PeriodWitness> witness;
};

struct PeriodProbeOptions {
  double t_max = 10.0;
  double tol_close = 1e-6;
  double dt_out = 0.01;
  /// Returns before t_floor are ignored; defaults to 10 * dt_out when unset.
  std::optional<double> t_floor;
};

/// Searches each sample orbit for close returns |phi_T(x) - x| <= tol_close
/// with T > t_floor, refining T on the return distance.
template <FlowLike F>
PeriodProbeResult min_period_probe(const F& f, const std::vector<Vec>& samples, const PeriodProbeOptions& opt) {
  require(opt.t_max > 0, "min_period_probe: t_max must be positive");
  require(opt.dt_out > 0 && opt.tol_close > 0, "min_period_probe: bad resolution");
  const double t_floor = opt.t_floor.value_or(10.0 * opt.dt_out);
  const auto times = output_grid(0.0, opt.t_max, opt.dt_out);
  PeriodProbeResult out;
  for (const Vec& x : samples) {
    const auto orbit = sample_orbit(f, x, times);
    std::vector<double> dist(orbit.size());
    double vmax = 0;
    for (std::size_t k = 0; k < orbit.size(); ++k) {
      dist[k] = f.distance(orbit[k], x);
      vmax = std::max(vmax, f.velocity(orbit[k]).norm());
    }
    const double coarse = vmax * opt.dt_out + opt.tol_close;
    for (std::size_t k = 1; k + 1 < orbit.size(); ++k) {
      if (times[k] <= t_floor || times[k] >= out.eps0_upper) continue;
      if (dist[k] > coarse || dist[k] > dist[k - 1] || dist[k] > dist[k + 1]) continue;
      const Vec& base = orbit[k - 1];
      const double tb = times[k - 1];
      auto ret = [&](double T) { return f.distance(f.advance(base, T - tb), x); };
      const auto m = golden_section(ret, times[k - 1], times[k + 1], 1e-13 * std::max(1.0, times[k]));
      if (m.value <= opt.tol_close && m.x > t_floor && m.x < out.eps0_upper) {
        out.eps0_upper = m.x;
        out.witness = PeriodWitness{x, m.x, m.value};
        break;
      }
    }
  }
  return out;
}

}  // namespace flowcent
