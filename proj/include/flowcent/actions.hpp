#pragma once

// R^d actions generated by d commuting vector fields on a common domain.
// Phi_v is the composition of the generator flows for times v_1, ..., v_d.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowcent/integrator.hpp"
#include "flowcent/reparam.hpp"

namespace flowcent {

inline constexpr double kDefaultTolComm = 1e-8;

struct CommutingReport {
  double bracket = 0.0;
  double flow_defect = 0.0;
  bool pass = false;
};

inline void require_same_space(const std::vector<VectorField>& fields, const char* who) {
  require(!fields.empty(), std::string(who) + ": no generators");
  for (const auto& f : fields) {
    require(f.dim() == fields.front().dim(), std::string(who) + ": generators differ in dimension");
    require(f.domain().periodic == fields.front().domain().periodic,
            std::string(who) + ": generators live on different domains");
  }
}

/// Pairwise brackets and flow-commutation defects |phi^i_t phi^j_s x - phi^j_s phi^i_t x|.
inline CommutingReport verify_commuting(const std::vector<VectorField>& fields, const std::vector<Vec>& samples,
                                        double tol_comm = kDefaultTolComm,
                                        const std::vector<double>& times = {0.37, -0.61},
                                        double tol_int = kDefaultTolInt) {
  require_same_space(fields, "verify_commuting");
  CommutingReport r;
  const Domain& dom = fields.front().domain();
  for (const Vec& x : samples) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      for (std::size_t j = i + 1; j < fields.size(); ++j) {
        r.bracket = std::max(r.bracket, lie_bracket(fields[i], fields[j], x).norm());
        for (double t : times) {
          for (double s : times) {
            const Vec a = flow(fields[j], flow(fields[i], x, t, tol_int), s, tol_int);
            const Vec b = flow(fields[i], flow(fields[j], x, s, tol_int), t, tol_int);
            r.flow_defect = std::max(r.flow_defect, dom.distance(a, b));
          }
        }
      }
    }
  }
  r.pass = r.bracket <= tol_comm && r.flow_defect <= tol_comm;
  return r;
}

/// [X_1(x) ... X_d(x)] as an n x d matrix.
inline Mat frame_at(const std::vector<VectorField>& fields, const Vec& x) {
  Mat f(fields.front().dim(), static_cast<Eigen::Index>(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) f.col(static_cast<Eigen::Index>(i)) = fields[i].eval(x);
  return f;
}

inline double smallest_singular_value(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  return m.cols() > m.rows() ? 0.0 : s(s.size() - 1);
}

struct HomogeneityReport {
  bool homogeneous = true;
  double min_singular_value = std::numeric_limits<double>::infinity();
  std::optional<Vec> worst_point;
};

/// True iff the generator vectors are independent at every sample.
inline HomogeneityReport check_homogeneous(const std::vector<VectorField>& fields, const std::vector<Vec>& samples,
                                           double tol_rank = 1e-9) {
  require_same_space(fields, "check_homogeneous");
  HomogeneityReport r;
  for (const Vec& x : samples) {
    const double s = smallest_singular_value(frame_at(fields, x));
    if (s < r.min_singular_value) {
      r.min_singular_value = s;
      r.worst_point = x;
    }
  }
  r.homogeneous = r.min_singular_value > tol_rank;
  return r;
}

class Action {
 public:
  /// Refuses generators whose sampled commutation residual exceeds tol_comm.
  Action(std::vector<VectorField> generators, const std::vector<Vec>& samples, double tol_comm = kDefaultTolComm,
         double tol_int = kDefaultTolInt)
      : gens_(std::move(generators)), tol_int_(tol_int) {
    require_same_space(gens_, "action");
    require(static_cast<Eigen::Index>(gens_.size()) <= gens_.front().dim(),
            "action: more generators than state dimensions");
    const auto rep = verify_commuting(gens_, samples, tol_comm, {0.37, -0.61}, tol_int);
    residual_ = std::max(rep.bracket, rep.flow_defect);
    if (!rep.pass) {
      std::ostringstream os;
      os << "action: generators do not commute (bracket " << rep.bracket << ", flow defect " << rep.flow_defect
         << ")";
      throw ValidationError(os.str());
    }
  }

  int rank() const { return static_cast<int>(gens_.size()); }
  Eigen::Index dim() const { return gens_.front().dim(); }
  const std::vector<VectorField>& generators() const { return gens_; }
  const Domain& domain() const { return gens_.front().domain(); }
  double commutation_residual() const { return residual_; }
  double tolerance() const { return tol_int_; }

  Vec act(const Vec& v, const Vec& x) const {
    require(v.size() == rank(), "action: parameter dimension mismatch");
    Vec y = domain().canonical(x);
    for (int i = 0; i < rank(); ++i) {
      if (v(i) != 0.0) y = flow(gens_[static_cast<std::size_t>(i)], y, v(i), tol_int_);
    }
    return y;
  }

  Mat frame(const Vec& x) const { return frame_at(gens_, x); }
  double distance(const Vec& a, const Vec& b) const { return domain().distance(a, b); }

  /// X_v = sum v_i X_i, the generator of t -> Phi_{t v}.
  VectorField direction_field(const Vec& v) const {
    require(v.size() == rank(), "action: direction dimension mismatch");
    std::vector<double> coeffs(v.data(), v.data() + v.size());
    return VectorField::combination(coeffs, gens_);
  }

  /// t -> Phi_{t v} as a flow.
  OdeFlow direction_flow(const Vec& v) const { return OdeFlow(direction_field(v), tol_int_); }

 private:
  std::vector<VectorField> gens_;
  double tol_int_;
  double residual_ = 0.0;
};

// ---------------------------------------------------------------------------
// Periods.

struct ActionPeriod {
  double eps0_upper = std::numeric_limits<double>::infinity();
  std::optional<Vec> period;
};

/// Coarse grid over the cube |v_i| <= radius (step radius/50, coarser in high
/// rank), then Gauss-Newton on the wrapped displacement Phi_v(x) - x from
/// every grid local minimum. Returns the least |v| that closes up.
inline ActionPeriod action_min_period(const Action& action, const std::vector<Vec>& samples, double radius,
                                      double tol_close = 1e-6) {
  ActionPeriod out;
  if (!(radius > 0)) return out;
  const int d = action.rank();
  int half = 50;
  while (std::pow(2.0 * half + 1.0, d) > 2e5) half /= 2;
  const double step = radius / half;
  const Domain& dom = action.domain();
  const long per_axis = 2L * half + 1;
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per_axis;

  auto grid_point = [&](long idx) {
    Vec v(d);
    for (int i = 0; i < d; ++i) {
      v(i) = -radius + step * static_cast<double>(idx % per_axis);
      idx /= per_axis;
    }
    return v;
  };

  for (const Vec& x : samples) {
    double speed = 0;
    for (const auto& g : action.generators()) speed = std::max(speed, g.eval(x).norm());
    std::vector<double> dist(static_cast<std::size_t>(total));
    for (long k = 0; k < total; ++k) dist[static_cast<std::size_t>(k)] = action.distance(action.act(grid_point(k), x), x);
    const double coarse = speed * step * d + tol_close;
    for (long k = 0; k < total; ++k) {
      const double dk = dist[static_cast<std::size_t>(k)];
      if (dk > coarse) continue;
      // local minimum along every axis
      bool local_min = true;
      long stride = 1;
      for (int i = 0; i < d && local_min; ++i) {
        const long coord = (k / stride) % per_axis;
        if (coord > 0 && dist[static_cast<std::size_t>(k - stride)] < dk) local_min = false;
        if (coord + 1 < per_axis && dist[static_cast<std::size_t>(k + stride)] < dk) local_min = false;
        stride *= per_axis;
      }
      if (!local_min) continue;
      Vec v = grid_point(k);
      for (int it = 0; it < 30; ++it) {
        const Vec y = action.act(v, x);
        const Vec r = dom.difference(x, y);
        if (r.norm() <= 1e-14) break;
        const Mat j = action.frame(y);
        const Vec dv = j.completeOrthogonalDecomposition().solve(r);
        v -= dv;
        if (dv.norm() <= 1e-15 * std::max(1.0, v.norm())) break;
      }
      const double closing = action.distance(action.act(v, x), x);
      if (closing <= tol_close && v.norm() > 0.5 * step && v.norm() <= radius * (1.0 + 1e-12) &&
          v.norm() < out.eps0_upper) {
        out.eps0_upper = v.norm();
        out.period = v;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Change of basis.

struct ChangeOfBasis {
  Mat A;
  /// |Y - X A| (Frobenius): the part of the Y-frame outside span X.
  double residual = 0.0;
};

/// Least-squares A with [Y_1 ... Y_d] = [X_1 ... X_d] A at x.
inline ChangeOfBasis change_of_basis_A(const std::vector<VectorField>& xs, const std::vector<VectorField>& ys,
                                       const Vec& x, double tol_rank = 1e-10) {
  require(xs.size() == ys.size(), "change_of_basis_A: frames differ in size");
  require_same_space(xs, "change_of_basis_A");
  require_same_space(ys, "change_of_basis_A");
  const Mat fx = frame_at(xs, x);
  const Mat fy = frame_at(ys, x);
  if (!(smallest_singular_value(fx) > tol_rank * std::max(1.0, fx.norm()))) {
    std::ostringstream os;
    os << "change_of_basis_A: X-frame is rank deficient at x = (" << x.transpose() << ")";
    throw ValidationError(os.str());
  }
  ChangeOfBasis out;
  out.A = fx.colPivHouseholderQr().solve(fy);
  out.residual = (fy - fx * out.A).norm();
  return out;
}

struct ActionReparamSample {
  Vec point;
  Mat A;
  double frame_residual = 0.0;
};

struct ActionReparamMatrix {
  std::vector<ActionReparamSample> samples;
  double invariance_residual = 0.0;
  /// max |Psi_v(x) - Phi_{A(x) v}(x)| over samples and checks.
  double certification_residual = 0.0;
  double frame_residual = 0.0;
  double cross_commutation = 0.0;
};

/// A(x) for two commuting actions with orbit-preserving Psi, its invariance
/// along Phi-orbits and the certified identity Psi_v = Phi_{A v}.
inline ActionReparamMatrix action_reparam_field(const Action& phi, const Action& psi, const std::vector<Vec>& samples,
                                                const std::vector<Vec>& v_checks,
                                                double tol_comm = kDefaultTolComm) {
  require(phi.rank() == psi.rank(), "action_reparam_field: actions differ in rank");
  ActionReparamMatrix out;
  for (const auto& a : phi.generators()) {
    for (const auto& b : psi.generators()) {
      const auto rep = verify_commuting({a, b}, samples, tol_comm, {0.37, -0.61}, phi.tolerance());
      out.cross_commutation = std::max({out.cross_commutation, rep.bracket, rep.flow_defect});
    }
  }
  if (out.cross_commutation > tol_comm) {
    std::ostringstream os;
    os << "action_reparam_field: Psi does not commute with Phi (residual " << out.cross_commutation << ")";
    throw ValidationError(os.str());
  }
  for (const Vec& x : samples) {
    const auto cb = change_of_basis_A(phi.generators(), psi.generators(), x);
    out.samples.push_back({x, cb.A, cb.residual});
    out.frame_residual = std::max(out.frame_residual, cb.residual);
    for (const Vec& v : v_checks) {
      const Vec moved = phi.act(v, x);
      const auto there = change_of_basis_A(phi.generators(), psi.generators(), moved);
      out.invariance_residual = std::max(out.invariance_residual, (there.A - cb.A).norm());
      const double miss = phi.distance(psi.act(v, x), phi.act(cb.A * v, x));
      out.certification_residual = std::max(out.certification_residual, miss);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collapse to a flow.

struct CollapseDirection {
  Vec direction;
  /// A_i at each sample; empty when matching failed.
  std::vector<double> factors;
  double max_angle = 0.0;
  bool collinear = false;
  std::string failure;
};

struct CollapseReport {
  std::vector<CollapseDirection> directions;
  bool collinear = true;
};

/// Treats t -> Phi_{t v} as the reference flow and recovers, for each basis
/// direction u_i, the factor A_i(x) with Phi_{t u_i} = Phi_{A_i t v}.
inline CollapseReport collapse_to_flow(const Action& action, const Vec& v, const std::vector<Vec>& basis,
                                       const std::vector<Vec>& samples, const std::vector<double>& t_grid,
                                       const ReparamOptions& opt, double angle_tol = 1e-6) {
  const VectorField xv = action.direction_field(v);
  const OdeFlow ref(xv, action.tolerance());
  CollapseReport out;
  for (const Vec& u : basis) {
    CollapseDirection dir;
    dir.direction = u;
    const VectorField xu = action.direction_field(u);
    const OdeFlow other(xu, action.tolerance());
    for (const Vec& x : samples) {
      const Vec a = xv.eval(x), b = xu.eval(x);
      const Vec transverse = b - (a.dot(b) / a.squaredNorm()) * a;
      dir.max_angle = std::max(dir.max_angle, std::asin(std::min(1.0, transverse.norm() / b.norm())));
    }
    try {
      for (const Vec& x : samples) dir.factors.push_back(estimate_A(ref, other, x, t_grid, opt).A);
    } catch (const MatchFailure& e) {
      dir.factors.clear();
      dir.failure = e.what();
    }
    dir.collinear = dir.failure.empty() && dir.max_angle <= angle_tol;
    out.collinear = out.collinear && dir.collinear;
    out.directions.push_back(std::move(dir));
  }
  return out;
}

}  // namespace flowcent
