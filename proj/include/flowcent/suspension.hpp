#pragma once

// Suspension of a Z^d action with roof identically one: points (x, a) with
// heights a in [0,1)^d and (x, a + e_i) ~ (f_i x, a). The R^d action adds
// to the heights; the fiber metric mixes base distances over the corners
// of the unit cube; the chain metric is approximated by shortest paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "flowcent/basemap.hpp"

namespace flowcent {

/// Deterministic low-discrepancy points on T^n (Kronecker sequence).
inline std::vector<Vec> kronecker_points(int dim, int count) {
  std::vector<Vec> out;
  // generalized golden ratio for `dim` dimensions
  double g = 2.0;
  for (int it = 0; it < 60; ++it) g = std::pow(1.0 + g, 1.0 / (dim + 1));
  Vec alpha(dim);
  for (int i = 0; i < dim; ++i) alpha(i) = wrap01(std::pow(1.0 / g, i + 1));
  for (int k = 1; k <= count; ++k) {
    Vec x(dim);
    for (int i = 0; i < dim; ++i) x(i) = wrap01(0.5 + k * alpha(i));
    out.push_back(x);
  }
  return out;
}

class BaseAction {
 public:
  explicit BaseAction(std::vector<BaseMap> generators, std::vector<Vec> samples = {}, double tol = 1e-9)
      : gens_(std::move(generators)) {
    require(!gens_.empty(), "base action: no generators");
    require(gens_.size() <= 8, "base action: rank above 8 is not supported");
    for (const auto& g : gens_) require(g.dim() == gens_.front().dim(), "base action: generators differ in dimension");
    if (samples.empty()) samples = kronecker_points(dim(), 16);
    const Domain dom = domain();
    for (const Vec& x : samples) {
      require(x.size() == dim(), "base action: sample dimension mismatch");
      for (std::size_t i = 0; i < gens_.size(); ++i) {
        require(dom.distance(gens_[i].apply_inverse(gens_[i].apply(x)), dom.canonical(x)) <= tol,
                "base action: generator inverse does not invert");
        for (std::size_t j = i + 1; j < gens_.size(); ++j) {
          const double defect = dom.distance(gens_[i].apply(gens_[j].apply(x)), gens_[j].apply(gens_[i].apply(x)));
          if (defect > tol) {
            std::ostringstream os;
            os << "base action: generators " << i << " and " << j << " do not commute (defect " << defect << ")";
            throw ValidationError(os.str());
          }
        }
      }
    }
    lipschitz_ = 1.0;
    for (unsigned mask = 0; mask < corners(); ++mask) {
      Mat l = Mat::Identity(dim(), dim());
      for (std::size_t i = 0; i < gens_.size(); ++i)
        if (mask & (1u << i)) l = gens_[i].linear_part() * l;
      Eigen::JacobiSVD<Mat> svd(l);
      const auto& s = svd.singularValues();
      lipschitz_ = std::max({lipschitz_, s(0), 1.0 / s(s.size() - 1)});
    }
  }

  int rank() const { return static_cast<int>(gens_.size()); }
  int dim() const { return gens_.front().dim(); }
  unsigned corners() const { return 1u << gens_.size(); }
  const std::vector<BaseMap>& generators() const { return gens_; }
  Domain domain() const { return Domain::torus(static_cast<std::size_t>(dim())); }
  double distance(const Vec& a, const Vec& b) const { return domain().distance(a, b); }

  /// Bi-Lipschitz constant C of every corner map f^s (analytic, from linear parts).
  double lipschitz() const { return lipschitz_; }

  /// f_1^{k_1} o ... o f_d^{k_d} (x).
  Vec apply(const std::vector<long>& k, const Vec& x) const {
    require(k.size() == gens_.size(), "base action: shift rank mismatch");
    Vec y = domain().canonical(x);
    for (std::size_t i = gens_.size(); i-- > 0;) {
      if (k[i] != 0) y = gens_[i].iterate(y, k[i]);
    }
    return y;
  }

  Vec corner(unsigned mask, const Vec& x) const { return corner_image(gens_, mask, x); }

 private:
  std::vector<BaseMap> gens_;
  double lipschitz_ = 1.0;
};

struct SuspensionPoint {
  Vec base;
  Vec heights;
};

struct Normalized {
  SuspensionPoint point;
  /// Integer number of roof crossings per generator.
  std::vector<long> shift;
};

/// Canonical representative: heights in [0, 1), base moved by f^floor(a).
inline Normalized normalize_with_shift(const BaseAction& action, const Vec& x, const Vec& a) {
  require(a.size() == action.rank(), "normalize: height rank mismatch");
  require(x.size() == action.dim(), "normalize: base dimension mismatch");
  require(a.allFinite(), "normalize: heights must be finite");
  Normalized out;
  out.point.heights = a;
  out.shift.assign(static_cast<std::size_t>(a.size()), 0);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double k = std::floor(a(i));
    double h = a(i) - k;
    long ki = static_cast<long>(k);
    if (h >= 1.0) {  // a tiny negative height rounds up to exactly 1
      h = 0.0;
      ++ki;
    }
    out.point.heights(i) = h;
    out.shift[static_cast<std::size_t>(i)] = ki;
  }
  out.point.base = action.apply(out.shift, x);
  return out;
}

inline SuspensionPoint normalize(const BaseAction& action, const Vec& x, const Vec& a) {
  return normalize_with_shift(action, x, a).point;
}

inline Normalized act_with_shift(const BaseAction& action, const Vec& v, const SuspensionPoint& p) {
  require(v.size() == action.rank(), "act: displacement rank mismatch");
  return normalize_with_shift(action, p.base, p.heights + v);
}

inline SuspensionPoint act(const BaseAction& action, const Vec& v, const SuspensionPoint& p) {
  return act_with_shift(action, v, p).point;
}

/// sum over corners s of prod_i [s_i t_i + (1 - s_i)(1 - t_i)], summed with
/// Neumaier compensation.
inline double weight_sum(const Vec& t) {
  require(t.size() >= 1 && t.size() <= 16, "weight_sum: rank out of range");
  const unsigned corners = 1u << t.size();
  double sum = 0.0, comp = 0.0;
  for (unsigned mask = 0; mask < corners; ++mask) {
    const double w = corner_weight(mask, t);
    const double s = sum + w;
    comp += std::abs(sum) >= std::abs(w) ? (sum - s) + w : (w - s) + sum;
    sum = s;
  }
  return sum + comp;
}

/// Fiber metric between two points with identical heights.
inline double rho_h(const BaseAction& action, const SuspensionPoint& p, const SuspensionPoint& q) {
  require(p.heights.size() == action.rank() && q.heights.size() == action.rank(), "rho_h: height rank mismatch");
  if ((p.heights - q.heights).cwiseAbs().maxCoeff() > 1e-12) throw ValidationError("rho_h: points lie in different fibers");
  return fiber_distance(action.generators(), p.heights, p.base, q.base);
}

/// min over corners s of rho(f^s x1, f^s x2).
inline double tilde_rho(const BaseAction& action, const Vec& x1, const Vec& x2) {
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < action.corners(); ++mask) {
    best = std::min(best, action.distance(action.corner(mask, x1), action.corner(mask, x2)));
  }
  return best;
}

/// inf |v| with act(v, p) = q over integer lifts k in {-2..2}^d (base match
/// within tol), or none when q is not on a short piece of the orbit of p.
inline std::optional<double> vertical_distance(const BaseAction& action, const SuspensionPoint& p,
                                               const SuspensionPoint& q, double tol = 1e-12) {
  const int d = action.rank();
  std::optional<double> best;
  std::vector<long> k(static_cast<std::size_t>(d), -2);
  for (;;) {
    Vec v = q.heights - p.heights;
    for (int i = 0; i < d; ++i) v(i) += static_cast<double>(k[static_cast<std::size_t>(i)]);
    if (v.norm() <= 2.0 * std::sqrt(static_cast<double>(d)) + 1e-12) {
      if (action.distance(action.apply(k, p.base), q.base) <= tol) {
        if (!best || v.norm() < *best) best = v.norm();
      }
    }
    int i = 0;
    while (i < d && ++k[static_cast<std::size_t>(i)] > 2) {
      k[static_cast<std::size_t>(i)] = -2;
      ++i;
    }
    if (i == d) break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Chain metric.

struct ChainLink {
  enum class Kind { horizontal, vertical };
  Kind kind = Kind::horizontal;
  double length = 0.0;
  /// Displacement v with act(v, from) = to (vertical links only).
  Vec displacement;
};

struct ChainPath {
  std::vector<SuspensionPoint> nodes;
  std::vector<ChainLink> links;

  double total_length() const {
    double s = 0;
    for (const auto& l : links) s += l.length;
    return s;
  }
};

struct ChainResolution {
  /// Base grid points per torus axis (k / n).
  int base_per_axis = 16;
  /// Height grid points per unit (j / m).
  int heights = 16;
  std::size_t max_nodes = 200000;
};

struct ChainEstimate {
  double length = 0.0;
  ChainPath path;
};

/// Largest grid spacing of a resolution (base or height).
inline double grid_step(const ChainResolution& res) {
  return std::max(1.0 / res.base_per_axis, 1.0 / res.heights);
}

/// Checks every link of a chain against its declared relation.
inline double chain_defect(const BaseAction& action, const ChainPath& path) {
  double worst = 0;
  for (std::size_t i = 0; i < path.links.size(); ++i) {
    const auto& a = path.nodes[i];
    const auto& b = path.nodes[i + 1];
    const auto& l = path.links[i];
    if (l.kind == ChainLink::Kind::vertical) {
      const auto moved = act(action, l.displacement, a);
      worst = std::max({worst, action.distance(moved.base, b.base), (moved.heights - b.heights).cwiseAbs().maxCoeff(),
                        std::abs(l.displacement.norm() - l.length)});
    } else {
      worst = std::max({worst, (a.heights - b.heights).cwiseAbs().maxCoeff(), std::abs(rho_h(action, a, b) - l.length)});
    }
  }
  return worst;
}

namespace detail {

struct ChainGraph {
  struct Edge {
    int to;
    double w;
    ChainLink::Kind kind;
    Vec disp;
  };
  std::vector<SuspensionPoint> nodes;
  std::vector<std::vector<Edge>> adj;
  std::map<std::vector<std::int64_t>, int> index;

  std::vector<std::int64_t> key(const Vec& base, const Vec& heights) const {
    std::vector<std::int64_t> k;
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      auto q = static_cast<std::int64_t>(std::llround(wrap01(base(i)) * 1e11));
      if (q == 100000000000LL) q = 0;
      k.push_back(q);
    }
    for (Eigen::Index i = 0; i < heights.size(); ++i) k.push_back(std::llround(heights(i) * 1e11));
    return k;
  }

  int add(const SuspensionPoint& p, std::size_t max_nodes) {
    const auto k = key(p.base, p.heights);
    if (auto it = index.find(k); it != index.end()) return it->second;
    if (nodes.size() >= max_nodes) throw ValidationError("chain_metric: node budget exceeded; lower the resolution");
    nodes.push_back(p);
    adj.emplace_back();
    const int id = static_cast<int>(nodes.size()) - 1;
    index.emplace(k, id);
    return id;
  }

  void connect(int a, int b, double w, ChainLink::Kind kind, const Vec& disp) {
    if (a == b) return;
    adj[static_cast<std::size_t>(a)].push_back({b, w, kind, disp});
    adj[static_cast<std::size_t>(b)].push_back({a, w, kind, kind == ChainLink::Kind::vertical ? Vec(-disp) : disp});
  }
};

}  // namespace detail

/// Upper bound for the chain metric: shortest path over a graph whose nodes
/// are grid columns (base grid plus the bases of p and q, every grid height),
/// the landing points of roof crossings, and p, q themselves. Vertical edges
/// join grid neighbours in a column; horizontal edges join every pair in a
/// common fiber with weight rho_h. Doubling the resolution nests the graphs,
/// so estimates never increase under refinement.
inline ChainEstimate chain_metric(const BaseAction& action, const SuspensionPoint& p, const SuspensionPoint& q,
                                  const ChainResolution& res = {}) {
  require(res.base_per_axis >= 1 && res.heights >= 1, "chain_metric: resolution must be positive");
  const int d = action.rank();
  const int n = action.dim();
  const int m = res.heights;
  require(p.heights.size() == d && q.heights.size() == d, "chain_metric: height rank mismatch");
  for (const auto* pt : {&p, &q}) {
    require(pt->heights.minCoeff() >= 0.0 && pt->heights.maxCoeff() < 1.0, "chain_metric: points must be canonical");
  }

  long column_count = 1;
  for (int i = 0; i < n; ++i) column_count *= res.base_per_axis;
  long height_count = 1;
  for (int i = 0; i < d; ++i) height_count *= m;
  if (static_cast<double>(column_count + 2) * static_cast<double>(height_count) * 2.0 > static_cast<double>(res.max_nodes)) {
    throw ValidationError("chain_metric: resolution exceeds max_nodes");
  }

  std::vector<Vec> columns;
  for (long c = 0; c < column_count; ++c) {
    Vec b(n);
    long idx = c;
    for (int i = 0; i < n; ++i) {
      b(i) = static_cast<double>(idx % res.base_per_axis) / res.base_per_axis;
      idx /= res.base_per_axis;
    }
    columns.push_back(b);
  }
  const Domain dom = action.domain();
  columns.push_back(dom.canonical(p.base));
  columns.push_back(dom.canonical(q.base));

  auto heights_of = [&](const std::vector<int>& idx) {
    Vec h(d);
    for (int i = 0; i < d; ++i) h(i) = static_cast<double>(idx[static_cast<std::size_t>(i)]) / m;
    return h;
  };

  detail::ChainGraph g;
  std::vector<std::vector<int>> column_nodes(columns.size());
  std::vector<std::vector<int>> height_index;
  for (long h = 0; h < height_count; ++h) {
    std::vector<int> idx(static_cast<std::size_t>(d));
    long r = h;
    for (int i = 0; i < d; ++i) {
      idx[static_cast<std::size_t>(i)] = static_cast<int>(r % m);
      r /= m;
    }
    height_index.push_back(idx);
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (const auto& idx : height_index) column_nodes[c].push_back(g.add({columns[c], heights_of(idx)}, res.max_nodes));
  }

  // vertical edges between grid neighbours, crossing the roof where needed
  std::vector<std::vector<int>> offsets;
  for (long o = 0; o < static_cast<long>(std::pow(3, d)); ++o) {
    std::vector<int> off(static_cast<std::size_t>(d));
    long r = o;
    bool nonzero = false;
    for (int i = 0; i < d; ++i) {
      off[static_cast<std::size_t>(i)] = static_cast<int>(r % 3) - 1;
      nonzero = nonzero || off[static_cast<std::size_t>(i)] != 0;
      r /= 3;
    }
    if (nonzero) offsets.push_back(off);
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t h = 0; h < height_index.size(); ++h) {
      const int from = column_nodes[c][h];
      for (const auto& off : offsets) {
        std::vector<int> idx = height_index[h];
        std::vector<long> shift(static_cast<std::size_t>(d), 0);
        Vec disp(d);
        for (int i = 0; i < d; ++i) {
          auto& j = idx[static_cast<std::size_t>(i)];
          j += off[static_cast<std::size_t>(i)];
          disp(i) = static_cast<double>(off[static_cast<std::size_t>(i)]) / m;
          if (j == m) {
            j = 0;
            shift[static_cast<std::size_t>(i)] = 1;
          } else if (j == -1) {
            j = m - 1;
            shift[static_cast<std::size_t>(i)] = -1;
          }
        }
        const Vec base = action.apply(shift, columns[c]);
        const int to = g.add({base, heights_of(idx)}, res.max_nodes);
        if (to > from || std::any_of(shift.begin(), shift.end(), [](long s) { return s != 0; })) {
          g.connect(from, to, disp.norm(), ChainLink::Kind::vertical, disp);
        }
      }
    }
  }

  // p and q: vertical links to every node of their own column, and directly
  const int ip = g.add(p, res.max_nodes);
  const int iq = g.add(q, res.max_nodes);
  for (std::size_t which = 0; which < 2; ++which) {
    const SuspensionPoint& pt = which == 0 ? p : q;
    const int id = which == 0 ? ip : iq;
    const std::size_t col = columns.size() - 2 + which;
    for (std::size_t h = 0; h < height_index.size(); ++h) {
      const Vec disp = heights_of(height_index[h]) - pt.heights;
      g.connect(id, column_nodes[col][h], disp.norm(), ChainLink::Kind::vertical, disp);
    }
  }
  if (auto v = vertical_distance(action, p, q)) {
    Vec best_disp;
    std::vector<long> k(static_cast<std::size_t>(d), -2);
    for (;;) {
      Vec disp = q.heights - p.heights;
      for (int i = 0; i < d; ++i) disp(i) += static_cast<double>(k[static_cast<std::size_t>(i)]);
      if (std::abs(disp.norm() - *v) <= 1e-15 && action.distance(action.apply(k, p.base), q.base) <= 1e-12) {
        best_disp = disp;
        break;
      }
      int i = 0;
      while (i < d && ++k[static_cast<std::size_t>(i)] > 2) {
        k[static_cast<std::size_t>(i)] = -2;
        ++i;
      }
      if (i == d) break;
    }
    if (best_disp.size() == d) g.connect(ip, iq, *v, ChainLink::Kind::vertical, best_disp);
  }

  // horizontal edges inside each fiber
  std::map<std::vector<std::int64_t>, std::vector<int>> fibers;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    std::vector<std::int64_t> k;
    for (Eigen::Index j = 0; j < g.nodes[i].heights.size(); ++j) k.push_back(std::llround(g.nodes[i].heights(j) * 1e11));
    fibers[k].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<Vec>> images(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (unsigned mask = 0; mask < action.corners(); ++mask) images[i].push_back(action.corner(mask, g.nodes[i].base));
  }
  for (const auto& [key, members] : fibers) {
    const Vec& t = g.nodes[static_cast<std::size_t>(members.front())].heights;
    std::vector<double> w(action.corners());
    for (unsigned mask = 0; mask < action.corners(); ++mask) w[mask] = corner_weight(mask, t);
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const auto ia = static_cast<std::size_t>(members[a]), ib = static_cast<std::size_t>(members[b]);
        double len = 0;
        for (unsigned mask = 0; mask < action.corners(); ++mask) {
          if (w[mask] != 0.0) len += w[mask] * dom.distance(images[ia][mask], images[ib][mask]);
        }
        g.connect(members[a], members[b], len, ChainLink::Kind::horizontal, Vec());
      }
    }
  }

  // Dijkstra
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.nodes.size(), inf);
  std::vector<int> prev(g.nodes.size(), -1);
  std::vector<int> prev_edge(g.nodes.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(ip)] = 0.0;
  heap.push({0.0, ip});
  while (!heap.empty()) {
    const auto [du, u] = heap.top();
    heap.pop();
    if (du > dist[static_cast<std::size_t>(u)]) continue;
    if (u == iq) break;
    const auto& edges = g.adj[static_cast<std::size_t>(u)];
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double nd = du + edges[e].w;
      const auto to = static_cast<std::size_t>(edges[e].to);
      if (nd < dist[to]) {
        dist[to] = nd;
        prev[to] = u;
        prev_edge[to] = static_cast<int>(e);
        heap.push({nd, edges[e].to});
      }
    }
  }
  if (!std::isfinite(dist[static_cast<std::size_t>(iq)])) {
    throw NumericalError("chain_metric: p and q are disconnected at this resolution; refine the grid");
  }

  ChainEstimate out;
  out.length = dist[static_cast<std::size_t>(iq)];
  std::vector<int> order;
  for (int v = iq; v != -1; v = prev[static_cast<std::size_t>(v)]) order.push_back(v);
  std::reverse(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.path.nodes.push_back(g.nodes[static_cast<std::size_t>(order[i])]);
    if (i == 0) continue;
    const auto from = static_cast<std::size_t>(order[i - 1]);
    const auto& edge = g.adj[from][static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(order[i])])];
    out.path.links.push_back({edge.kind, edge.w, edge.disp});
  }
  return out;
}

// ---------------------------------------------------------------------------
// The suspension action on flat states (base coordinates then heights), for
// the expansiveness probes.

class SuspensionAction {
 public:
  explicit SuspensionAction(BaseAction base) : base_(std::move(base)) {}

  const BaseAction& base() const { return base_; }
  int rank() const { return base_.rank(); }
  Eigen::Index dim() const { return base_.dim() + base_.rank(); }

  SuspensionPoint split(const Vec& state) const {
    require(state.size() == dim(), "suspension action: state dimension mismatch");
    return {state.head(base_.dim()), state.tail(base_.rank())};
  }
  Vec join(const SuspensionPoint& p) const {
    Vec s(dim());
    s << p.base, p.heights;
    return s;
  }

  Vec canonical(const Vec& state) const {
    const auto p = split(state);
    return join(normalize(base_, p.base, p.heights));
  }
  Vec act(const Vec& v, const Vec& state) const {
    const auto p = split(state);
    return join(normalize(base_, p.base, p.heights + v));
  }

  /// Two-link chain: a vertical move of q into the fiber of p, then rho_h.
  /// An upper bound for the chain metric, symmetrized.
  double distance(const Vec& a, const Vec& b) const { return std::min(one_sided(a, b), one_sided(b, a)); }

 private:
  double one_sided(const Vec& a, const Vec& b) const {
    const auto p = split(a), q = split(b);
    const int d = rank();
    double best = std::numeric_limits<double>::infinity();
    std::vector<long> k(static_cast<std::size_t>(d), -1);
    for (;;) {
      Vec w = p.heights - q.heights;
      for (int i = 0; i < d; ++i) w(i) += static_cast<double>(k[static_cast<std::size_t>(i)]);
      if (w.norm() < best) {
        // q moved by w lands in the fiber of p
        const Vec moved_base = base_.apply(k, q.base);
        best = std::min(best, w.norm() + fiber_distance(base_.generators(), p.heights, p.base, moved_base));
      }
      int i = 0;
      while (i < d && ++k[static_cast<std::size_t>(i)] > 1) {
        k[static_cast<std::size_t>(i)] = -1;
        ++i;
      }
      if (i == d) break;
    }
    return best;
  }

  BaseAction base_;
};

}  // namespace flowcent
