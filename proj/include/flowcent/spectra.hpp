#pragma once

// Location and spectral classification of singularities: hyperbolicity,
// stable index, separate non-resonance of the stable and unstable bundles,
// and the Kopell regularity order of a sink.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowcent/field.hpp"
#include "flowcent/linalg.hpp"

namespace flowcent {

inline constexpr double kDefaultTolHyp = 1e-9;
inline constexpr double kDefaultTolRes = 1e-9;

// ---------------------------------------------------------------------------
// Newton search for zeros of a field.

struct DroppedSeed {
  Vec seed;
  std::string reason;
};

struct SingularitySearch {
  std::vector<Vec> points;
  std::vector<DroppedSeed> dropped;
};

struct NewtonOptions {
  double residual_tol = 1e-10;
  double merge_tol = 1e-6;
  int max_iter = 100;
};

inline SingularitySearch find_singularities(const VectorField& field, const std::vector<Vec>& seeds,
                                            const NewtonOptions& opt = {}) {
  const Domain& dom = field.domain();
  SingularitySearch out;
  for (const Vec& seed : seeds) {
    require(seed.size() == field.dim(), "find_singularities: seed dimension mismatch");
    Vec x = dom.canonical(seed);
    Vec fx = field.eval(x);
    std::string failure;
    for (int it = 0; it < opt.max_iter && fx.norm() > opt.residual_tol; ++it) {
      Eigen::ColPivHouseholderQR<Mat> qr(field.jacobian(x));
      if (qr.rank() < x.size()) {
        failure = "singular Jacobian";
        break;
      }
      const Vec step = qr.solve(fx);
      double lambda = 1.0;
      Vec trial = dom.canonical(x - step);
      Vec ftrial = field.eval(trial);
      while (ftrial.norm() >= fx.norm() && lambda > 1e-6) {
        lambda *= 0.5;
        trial = dom.canonical(x - lambda * step);
        ftrial = field.eval(trial);
      }
      if (ftrial.norm() >= fx.norm()) {
        // accept a full step anyway: damped Newton stalled
        trial = dom.canonical(x - step);
        ftrial = field.eval(trial);
      }
      x = trial;
      fx = ftrial;
      if (!x.allFinite()) {
        failure = "diverged";
        break;
      }
    }
    if (failure.empty() && fx.norm() > opt.residual_tol) failure = "no convergence";
    if (failure.empty()) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (dom.periodic[static_cast<std::size_t>(i)]) continue;
        if (x(i) < dom.lower(i) || x(i) > dom.upper(i)) failure = "left the domain";
      }
    }
    if (!failure.empty()) {
      out.dropped.push_back({seed, failure});
      continue;
    }
    const bool dup = std::any_of(out.points.begin(), out.points.end(),
                                 [&](const Vec& p) { return dom.distance(p, x) <= opt.merge_tol; });
    if (!dup) out.points.push_back(x);
  }
  std::sort(out.points.begin(), out.points.end(), [](const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  return out;
}

// ---------------------------------------------------------------------------
// Classification.

struct HyperbolicClass {
  bool hyperbolic = false;
  /// Stable dimension (with multiplicity); only set when hyperbolic.
  std::optional<int> index;
};

inline HyperbolicClass classify_hyperbolic(const Spectrum& spec, double tol_hyp = kDefaultTolHyp) {
  require(tol_hyp > 0, "classify_hyperbolic: tol_hyp must be positive");
  HyperbolicClass c;
  int stable = 0;
  for (const auto& v : spec.values) {
    if (std::abs(v.real()) <= tol_hyp) return c;
    if (v.real() < 0) ++stable;
  }
  c.hyperbolic = true;
  c.index = stable;
  return c;
}

/// A violated non-resonance condition.
struct ResonanceWitness {
  enum class Kind { coincident, relation };
  Kind kind = Kind::relation;
  /// Index i of the eigenvalue on the left-hand side (or first coincident one).
  std::size_t i = 0;
  /// For coincident witnesses: the other index.
  std::size_t j = 0;
  /// n_j for every bundle index (n_i = 0).
  std::vector<int> coefficients;
  /// |Re l_i - sum n_j Re l_j| / max |Re l|.
  double defect = 0.0;
};

struct ResonanceVerdict {
  bool nonresonant = true;
  std::optional<ResonanceWitness> witness;
  /// Smallest relative defect over every enumerated relation; how close the
  /// bundle is to resonance (infinite when no relation was enumerable).
  double margin = std::numeric_limits<double>::infinity();
};

inline constexpr long kResonanceEnumerationCap = 10'000'000;

/// Separate non-resonance of one stability bundle: eigenvalues pairwise
/// distinct and no relation Re l_i = sum_{j != i} n_j Re l_j with n_j >= 0
/// and sum n_j >= 2.
inline ResonanceVerdict check_nonresonant(const std::vector<Complex>& bundle, double tol_res = kDefaultTolRes) {
  require(!bundle.empty(), "check_nonresonant: empty bundle");
  require(tol_res > 0, "check_nonresonant: tol_res must be positive");
  const bool negative = bundle.front().real() < 0;
  for (const auto& v : bundle) {
    require(v.real() != 0.0 && (v.real() < 0) == negative,
            "check_nonresonant: real parts must share one strict sign (split stable/unstable bundles)");
  }
  const std::size_t k = bundle.size();
  std::vector<double> mag(k);
  double maxb = 0, minb = std::numeric_limits<double>::infinity(), max_abs = 0;
  for (std::size_t i = 0; i < k; ++i) {
    mag[i] = std::abs(bundle[i].real());
    maxb = std::max(maxb, mag[i]);
    minb = std::min(minb, mag[i]);
    max_abs = std::max(max_abs, std::abs(bundle[i]));
  }
  ResonanceVerdict verdict;

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (std::abs(bundle[i] - bundle[j]) <= tol_res * max_abs) {
        verdict.nonresonant = false;
        verdict.witness = ResonanceWitness{ResonanceWitness::Kind::coincident, i, j, {}, 0.0};
        verdict.margin = 0.0;
        return verdict;
      }
    }
  }
  if (k == 1) return verdict;

  const int bound = static_cast<int>(std::ceil(maxb / minb)) + 1;
  const double slack = tol_res * maxb;
  long visited = 0;
  std::vector<int> n(k, 0);

  for (std::size_t i = 0; i < k && verdict.nonresonant; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) others.push_back(j);
    // depth-first over n_j, pruning once the partial sum overshoots Re l_i
    auto dfs = [&](auto&& self, std::size_t depth, double sum, int count) -> bool {
      if (++visited > kResonanceEnumerationCap) {
        throw NumericalError("check_nonresonant: enumeration cap exceeded");
      }
      if (count >= 2) {
        const double defect = std::abs(mag[i] - sum);
        verdict.margin = std::min(verdict.margin, defect / maxb);
        if (defect <= slack) return true;
      }
      if (depth == others.size() || sum - mag[i] > slack) return false;
      const std::size_t j = others[depth];
      for (int c = 0; c <= bound; ++c) {
        n[j] = c;
        if (self(self, depth + 1, sum + c * mag[j], count + c)) return true;
        if (sum + c * mag[j] - mag[i] > slack) break;
      }
      n[j] = 0;
      return false;
    };
    std::fill(n.begin(), n.end(), 0);
    if (dfs(dfs, 0, 0.0, 0)) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += n[j] * mag[j];
      verdict.nonresonant = false;
      verdict.witness = ResonanceWitness{ResonanceWitness::Kind::relation, i, i, n, std::abs(mag[i] - s) / maxb};
    }
  }
  return verdict;
}

/// Least m >= 1 with m * max Re l < min Re l, for a sink spectrum.
inline int kopell_order(const std::vector<Complex>& sink) {
  require(!sink.empty(), "kopell_order: empty spectrum");
  double max_re = -std::numeric_limits<double>::infinity();
  double min_re = std::numeric_limits<double>::infinity();
  for (const auto& v : sink) {
    require(v.real() < 0, "kopell_order: every eigenvalue must have negative real part");
    max_re = std::max(max_re, v.real());
    min_re = std::min(min_re, v.real());
  }
  const double ratio = min_re / max_re;
  require(ratio < 1e9, "kopell_order: eigenvalue ratio out of range");
  int m = static_cast<int>(std::floor(ratio)) + 1;
  while (!(m * max_re < min_re)) ++m;
  while (m > 1 && (m - 1) * max_re < min_re) --m;
  return m;
}

inline int kopell_order(const Spectrum& sink) { return kopell_order(sink.values); }

// ---------------------------------------------------------------------------
// Full report.

struct SingularityReport {
  Vec location;
  Mat jacobian;
  Spectrum spectrum;
  bool hyperbolic = false;
  std::optional<int> index;
  Mat stable_basis;
  Mat unstable_basis;
  std::vector<Complex> stable_bundle;
  std::vector<Complex> unstable_bundle;
  ResonanceVerdict nonresonant_stable;
  ResonanceVerdict nonresonant_unstable;
  /// Kopell order of the whole spectrum for a sink (or of -B for a source).
  std::optional<int> kopell_m;
  std::optional<int> kopell_m_stable;
  std::optional<int> kopell_m_unstable;

  bool nonresonant() const { return nonresonant_stable.nonresonant && nonresonant_unstable.nonresonant; }
  bool is_saddle() const { return hyperbolic && index && *index > 0 && *index < spectrum.size(); }
};

struct SpectraOptions {
  double tol_hyp = kDefaultTolHyp;
  double tol_res = kDefaultTolRes;
};

inline SingularityReport report_from_jacobian(const Vec& p, const Mat& jac, const SpectraOptions& opt = {}) {
  SingularityReport r;
  r.location = p;
  r.jacobian = jac;
  r.spectrum = eigs(jac);
  const auto cls = classify_hyperbolic(r.spectrum, opt.tol_hyp);
  r.hyperbolic = cls.hyperbolic;
  r.index = cls.index;
  for (const auto& v : r.spectrum.values) {
    if (v.real() < -opt.tol_hyp) r.stable_bundle.push_back(v);
    if (v.real() > opt.tol_hyp) r.unstable_bundle.push_back(v);
  }
  const Eigen::Index n = jac.rows();
  if (r.hyperbolic) {
    const auto split = invariant_splitting(jac, *r.index);
    r.stable_basis = split.stable;
    r.unstable_basis = split.unstable;
  } else {
    r.stable_basis = Mat(n, 0);
    r.unstable_basis = Mat(n, 0);
  }
  if (!r.stable_bundle.empty()) {
    r.nonresonant_stable = check_nonresonant(r.stable_bundle, opt.tol_res);
    r.kopell_m_stable = kopell_order(r.stable_bundle);
  }
  if (!r.unstable_bundle.empty()) {
    r.nonresonant_unstable = check_nonresonant(r.unstable_bundle, opt.tol_res);
    std::vector<Complex> flipped;
    for (const auto& v : r.unstable_bundle) flipped.push_back(-v);
    r.kopell_m_unstable = kopell_order(flipped);
  }
  if (r.hyperbolic && r.unstable_bundle.empty()) r.kopell_m = r.kopell_m_stable;
  if (r.hyperbolic && r.stable_bundle.empty()) r.kopell_m = r.kopell_m_unstable;
  return r;
}

inline SingularityReport full_report(const VectorField& field, const Vec& p, const SpectraOptions& opt = {}) {
  require(p.size() == field.dim(), "full_report: point dimension mismatch");
  const double residual = field.eval(p).norm();
  if (residual > 1e-8) {
    std::ostringstream os;
    os << "full_report: not a singularity, |X(p)| = " << residual;
    throw ValidationError(os.str());
  }
  return report_from_jacobian(p, field.jacobian(p), opt);
}

}  // namespace flowcent
