#pragma once

// Expansiveness transfer between a Z^d action on a torus and its suspension:
// a falsifier for the base action and the action probe on the suspension,
// run side by side so that their verdicts can be compared.

#include <optional>
#include <string>
#include <vector>

#include "flowcent/probe.hpp"
#include "flowcent/suspension.hpp"

namespace flowcent {

struct BaseViolation {
  Vec x, y;
  /// sup over |n| <= horizon of rho(f^n x, f^n y).
  double sup_distance = 0.0;
  std::size_t pair_index = 0;
};

struct BaseProbeOptions {
  double delta = 0.05;
  std::size_t pairs = 1000;
  int horizon = 30;
  std::uint64_t seed = 0;
};

struct BaseProbeReport {
  std::optional<BaseViolation> violation;
  std::size_t pairs_tested = 0;
};

namespace detail {

// Integer points of [-H, H]^d ordered by sup-norm shells.
inline std::vector<std::vector<long>> integer_shells(int d, int horizon) {
  std::vector<std::vector<long>> out;
  for (long r = 0; r <= horizon; ++r) {
    std::vector<long> k(static_cast<std::size_t>(d), -r);
    for (;;) {
      long norm = 0;
      for (long v : k) norm = std::max(norm, std::abs(v));
      if (norm == r) out.push_back(k);
      int i = 0;
      while (i < d && ++k[static_cast<std::size_t>(i)] > r) {
        k[static_cast<std::size_t>(i)] = -r;
        ++i;
      }
      if (i == d) break;
    }
  }
  return out;
}

}  // namespace detail

/// Searches pairs x != y at distance below delta whose orbits stay within
/// delta for every |n| <= horizon.
inline BaseProbeReport base_violation_search(const BaseAction& action, const BaseProbeOptions& opt) {
  require(opt.delta > 0 && opt.pairs >= 1 && opt.horizon >= 0, "base probe: bad options");
  const auto shells = detail::integer_shells(action.rank(), opt.horizon);
  Rng rng(opt.seed);
  BaseProbeReport report;
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    const Vec x = rng.uniform_vec(action.dim());
    const Vec y = action.domain().canonical(x + opt.delta * rng.uniform(0.1, 0.999) * rng.direction(action.dim()));
    ++report.pairs_tested;
    double sup = 0;
    for (const auto& n : shells) {
      sup = std::max(sup, action.distance(action.apply(n, x), action.apply(n, y)));
      if (sup >= opt.delta) break;
    }
    if (sup < opt.delta && action.distance(x, y) > 0) {
      report.violation = BaseViolation{x, y, sup, p};
      return report;
    }
  }
  return report;
}

struct TransferOptions {
  double eps = 0.25;
  double delta = 0.05;
  std::size_t pairs = 1000;
  int horizon = 30;
  /// v-grid spacing of the suspension probe.
  double grid_step = 0.5;
  int h_maps = 2;
  std::uint64_t seed = 0;
};

struct TransferReport {
  BaseProbeReport base;
  ActionProbeReport suspension;

  bool base_violated() const { return base.violation.has_value(); }
  bool suspension_violated() const { return suspension.counterexample.has_value(); }
  /// Both probes reach the same verdict. A disagreement is a resolution
  /// finding, not evidence against the equivalence.
  bool agree() const { return base_violated() == suspension_violated(); }
};

/// Pairs (x, y) in the suspension with y a small random displacement of x
/// in base and heights.
inline PairSampler suspension_pairs(const SuspensionAction& sa, double radius) {
  return [&sa, radius](Rng& rng) {
    const auto& base = sa.base();
    const Vec x = sa.canonical(sa.join({rng.uniform_vec(base.dim()), rng.uniform_vec(base.rank())}));
    const Vec y = sa.canonical(x + radius * rng.uniform(0.1, 1.0) * rng.direction(sa.dim()));
    return std::make_pair(x, y);
  };
}

inline TransferReport transfer_test(const BaseAction& base, const TransferOptions& opt) {
  TransferReport out;
  out.base = base_violation_search(base, {opt.delta, opt.pairs, opt.horizon, opt.seed});
  const SuspensionAction sa(base);
  ActionProbeOptions ao;
  ao.eps = opt.eps;
  ao.delta = opt.delta;
  ao.pairs = opt.pairs;
  ao.horizon = opt.horizon;
  ao.grid_step = opt.grid_step;
  ao.h_maps = opt.h_maps;
  ao.seed = opt.seed;
  out.suspension = action_violation_search(sa, suspension_pairs(sa, opt.delta / 2.0), ao);
  return out;
}

struct CatalogEntry {
  std::string name;
  BaseAction action;
  /// Whether the base action is expansive (known analytically).
  bool expansive = false;
};

inline std::vector<CatalogEntry> transfer_catalog() {
  Mat cat(2, 2);
  cat << 2, 1, 1, 1;
  Vec r1(1), r2(1);
  r1 << std::sqrt(2.0) - 1.0;
  r2 << std::sqrt(3.0) - 1.0;
  std::vector<CatalogEntry> out;
  out.push_back({"identity-circle", BaseAction({BaseMap::identity(1)}), false});
  out.push_back({"hyperbolic-torus", BaseAction({BaseMap::automorphism(cat)}), true});
  out.push_back({"irrational-rotation", BaseAction({BaseMap::rotation(r1)}), false});
  out.push_back({"commuting-rotations", BaseAction({BaseMap::rotation(r1), BaseMap::rotation(r2)}), false});
  out.push_back({"hyperbolic-pair", BaseAction({BaseMap::automorphism(cat), BaseMap::automorphism(cat * cat)}), true});
  return out;
}

}  // namespace flowcent
