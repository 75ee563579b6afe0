#pragma once

// Small derivative-free minimizers used for orbit matching, period
// refinement and lattice searches.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flowcent/linalg.hpp"

namespace flowcent {

struct ScalarMin {
  double x = 0.0;
  double value = 0.0;
};

/// Golden-section search for a minimum of f on [a, b]; stops when the
/// bracket is narrower than xtol.
template <class F>
ScalarMin golden_section(F&& f, double a, double b, double xtol) {
  constexpr double invphi = 0.6180339887498949;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > xtol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? ScalarMin{c, fc} : ScalarMin{d, fd};
}

struct VectorMin {
  Vec x;
  double value = 0.0;
  int iterations = 0;
};

/// Nelder-Mead simplex minimization started from x0 with initial edge `step`.
template <class F>
VectorMin nelder_mead(F&& f, const Vec& x0, double step, double ftol = 1e-14, double xtol = 1e-12,
                      int max_iter = 2000) {
  const Eigen::Index n = x0.size();
  std::vector<Vec> pts;
  std::vector<double> vals;
  pts.push_back(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec p = x0;
    p(i) += step;
    pts.push_back(p);
  }
  for (const auto& p : pts) vals.push_back(f(p));
  std::vector<std::size_t> order(pts.size());
  int it = 0;
  for (; it < max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return vals[i] < vals[j]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double spread = 0;
    for (const auto& p : pts) spread = std::max(spread, (p - pts[best]).cwiseAbs().maxCoeff());
    if (std::abs(vals[worst] - vals[best]) <= ftol && spread <= xtol) break;
    if (spread <= xtol * 1e-3) break;
    Vec centroid = Vec::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);
    const Vec xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < vals[best]) {
      const Vec xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      const Vec xc = outside ? Vec(centroid + 0.5 * (xr - centroid)) : Vec(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(xc);
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  return {pts[best], vals[best], it};
}

}  // namespace flowcent
