#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <variant>

#include "cli/json_io.hpp"
#include "flowcent/actions.hpp"
#include "flowcent/period.hpp"
#include "flowcent/probe.hpp"
#include "flowcent/reparam.hpp"
#include "flowcent/spectra.hpp"
#include "flowcent/suspension.hpp"
#include "flowcent/transfer.hpp"

namespace flowcent::cli {

/// Both renderings of one run; the caller picks by --format.
struct Report {
  json doc;
  Table table;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"spectra", "commutant", "reparam", "action",
                                              "suspend", "probe",     "lorenz-demo"};
  return names;
}

namespace detail {

inline json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

inline void check_top_level(const json& cfg, std::initializer_list<const char*> extra) {
  if (!cfg.is_object()) throw ValidationError("config: expected a JSON object");
  for (const auto& [k, v] : cfg.items()) {
    bool known = k == "subcommand" || k == "system" || k == "tolerances" || k == "seed" || k == "output";
    for (const char* e : extra) known = known || k == e;
    if (!known) throw ValidationError("config: unknown field '" + k + "'");
  }
}

inline json tolerances(const json& cfg, std::initializer_list<const char*> keys) {
  if (!cfg.contains("tolerances")) return json::object();
  allow_keys(cfg.at("tolerances"), keys, "tolerances");
  return cfg.at("tolerances");
}

inline double positive(const json& j, const char* key, const std::string& where, double fallback) {
  const double v = number(j, key, where, fallback);
  if (!(v > 0)) throw ValidationError(where + "." + key + ": must be positive");
  return v;
}

inline std::size_t count(const json& j, const char* key, const std::string& where, long fallback) {
  const long v = integer(j, key, where, fallback);
  if (v < 1) throw ValidationError(where + "." + key + ": must be at least 1");
  return static_cast<std::size_t>(v);
}

inline std::vector<std::string> coordinate_names(const char* stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(std::string(stem) + "_" + std::to_string(i));
  return out;
}

// ---------------------------------------------------------------------------
// Singularity reports.

inline json verdict_json(const ResonanceVerdict& v) {
  json j;
  j["nonresonant"] = v.nonresonant;
  j["margin"] = finite_or_tag(v.margin);
  if (v.witness) {
    const auto& w = *v.witness;
    j["witness"] = {{"kind", w.kind == ResonanceWitness::Kind::coincident ? "coincident" : "relation"},
                    {"i", w.i},
                    {"j", w.j},
                    {"coefficients", w.coefficients},
                    {"defect", w.defect}};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

inline json eigen_list(const std::vector<Complex>& values) {
  json a = json::array();
  for (const auto& z : values) a.push_back(to_json(z));
  return a;
}

inline json singularity_json(const SingularityReport& r) {
  json j;
  j["location"] = to_json(r.location);
  j["jacobian"] = to_json(r.jacobian);
  j["eigenvalues"] = eigen_list(r.spectrum.values);
  j["hyperbolic"] = r.hyperbolic;
  j["index"] = optional_int(r.index);
  j["stable_bundle"] = eigen_list(r.stable_bundle);
  j["unstable_bundle"] = eigen_list(r.unstable_bundle);
  j["nonresonant"] = r.nonresonant();
  j["nonresonant_stable"] = verdict_json(r.nonresonant_stable);
  j["nonresonant_unstable"] = verdict_json(r.nonresonant_unstable);
  j["kopell_m"] = optional_int(r.kopell_m);
  j["kopell_m_stable"] = optional_int(r.kopell_m_stable);
  j["kopell_m_unstable"] = optional_int(r.kopell_m_unstable);
  return j;
}

/// One row per eigenvalue.
inline Table singularity_table(const std::vector<std::pair<std::string, SingularityReport>>& reports, Eigen::Index n) {
  Table t;
  t.header = {"singularity"};
  for (auto& c : coordinate_names("x", n)) t.header.push_back(c);
  for (const char* c : {"eigen_re", "eigen_im", "hyperbolic", "index", "nonresonant", "kopell_m_stable"}) t.header.push_back(c);
  for (const auto& [name, r] : reports) {
    for (const auto& z : r.spectrum.values) {
      std::vector<std::string> row{name};
      for (Eigen::Index i = 0; i < n; ++i) row.push_back(cell(r.location(i)));
      row.push_back(cell(z.real()));
      row.push_back(cell(z.imag()));
      row.push_back(cell(r.hyperbolic));
      row.push_back(r.index ? cell(*r.index) : "");
      row.push_back(cell(r.nonresonant()));
      row.push_back(r.kopell_m_stable ? cell(*r.kopell_m_stable) : "");
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline SpectraOptions spectra_options(const json& tol) {
  SpectraOptions o;
  o.tol_hyp = positive(tol, "hyperbolic", "tolerances", kDefaultTolHyp);
  o.tol_res = positive(tol, "resonance", "tolerances", kDefaultTolRes);
  return o;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Report run_spectra(const json& cfg) {
  detail::check_top_level(cfg, {"seeds"});
  const json tol = detail::tolerances(cfg, {"hyperbolic", "resonance", "newton_residual", "merge", "max_iterations"});
  const VectorField system = parse_field(field(cfg, "system", "config"), "system");
  const auto seeds = points(field(cfg, "seeds", "config"), "seeds", system.dim());
  NewtonOptions newton;
  newton.residual_tol = detail::positive(tol, "newton_residual", "tolerances", newton.residual_tol);
  newton.merge_tol = detail::positive(tol, "merge", "tolerances", newton.merge_tol);
  newton.max_iter = static_cast<int>(detail::count(tol, "max_iterations", "tolerances", newton.max_iter));
  const auto opt = detail::spectra_options(tol);

  const auto found = find_singularities(system, seeds, newton);
  Report out;
  out.doc["subcommand"] = "spectra";
  json sings = json::array();
  std::vector<std::pair<std::string, SingularityReport>> rows;
  for (std::size_t k = 0; k < found.points.size(); ++k) {
    const auto rep = full_report(system, found.points[k], opt);
    json j{{"name", "s" + std::to_string(k)}};
    j.update(detail::singularity_json(rep));
    sings.push_back(std::move(j));
    rows.emplace_back("s" + std::to_string(k), rep);
  }
  out.doc["singularities"] = std::move(sings);
  json dropped = json::array();
  for (const auto& d : found.dropped) dropped.push_back({{"seed", to_json(d.seed)}, {"reason", d.reason}});
  out.doc["dropped_seeds"] = std::move(dropped);
  out.table = detail::singularity_table(rows, system.dim());
  return out;
}

inline Report run_lorenz_demo(const json& cfg) {
  detail::check_top_level(cfg, {});
  const json tol = detail::tolerances(cfg, {"hyperbolic", "resonance"});
  double a = 10.0, b = 8.0 / 3.0, r = 28.0;
  if (cfg.contains("system")) {
    const json& s = cfg.at("system");
    allow_keys(s, {"kind", "a", "b", "r"}, "system");
    if (string(s, "kind", "system", "lorenz") != "lorenz") throw ValidationError("system: lorenz-demo only accepts kind 'lorenz'");
    a = number(s, "a", "system", a);
    b = number(s, "b", "system", b);
    r = number(s, "r", "system", r);
  }
  if (!(a > 0 && b > 0 && r > 1)) throw ValidationError("system: lorenz-demo needs a > 0, b > 0 and r > 1");
  const VectorField lorenz = VectorField::lorenz(a, b, r);
  const double c = std::sqrt(b * (r - 1.0));
  auto point = [](double x, double y, double z) {
    Vec v(3);
    v << x, y, z;
    return v;
  };
  const std::vector<Vec> seeds{point(0.1, -0.1, 0.1), point(-1.05 * c, -0.95 * c, 1.02 * (r - 1.0)),
                               point(1.05 * c, 0.95 * c, 1.02 * (r - 1.0))};
  const auto found = find_singularities(lorenz, seeds);
  if (found.points.size() != 3) throw NumericalError("lorenz-demo: expected three singularities, found " + std::to_string(found.points.size()));
  const auto opt = detail::spectra_options(tol);

  // The origin has closed-form eigenvalues -b and the roots of
  // l^2 + (a + 1) l + a (1 - r).
  const double disc = std::sqrt((a + 1.0) * (a + 1.0) + 4.0 * a * (r - 1.0));
  std::vector<double> closed{(-(a + 1.0) - disc) / 2.0, -b, (-(a + 1.0) + disc) / 2.0};

  Report out;
  out.doc["subcommand"] = "lorenz-demo";
  out.doc["parameters"] = {{"a", a}, {"b", b}, {"r", r}};
  json sings = json::array();
  std::vector<std::pair<std::string, SingularityReport>> rows;
  bool all_nonresonant = true;
  std::optional<int> origin_m;
  for (const Vec& p : found.points) {
    const auto rep = full_report(lorenz, p, opt);
    std::string name = p.norm() < 1e-8 ? "origin" : (p(0) < 0 ? "negative-lobe" : "positive-lobe");
    json j{{"name", name}};
    j.update(detail::singularity_json(rep));
    if (name == "origin") {
      origin_m = rep.kopell_m_stable;
      std::vector<double> re;
      for (const auto& z : rep.spectrum.values) re.push_back(z.real());
      std::sort(re.begin(), re.end());
      double dev = 0;
      for (std::size_t i = 0; i < 3; ++i) dev = std::max(dev, std::abs(re[i] - closed[i]));
      for (const auto& z : rep.spectrum.values) dev = std::max(dev, std::abs(z.imag()));
      j["closed_form_eigenvalues"] = closed;
      j["closed_form_deviation"] = dev;
    }
    all_nonresonant = all_nonresonant && rep.nonresonant();
    sings.push_back(std::move(j));
    rows.emplace_back(name, rep);
  }
  // origin first, then the lobes by sign
  auto rank = [](const std::string& n) { return n == "origin" ? 0 : n == "negative-lobe" ? 1 : 2; };
  std::vector<std::size_t> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return rank(rows[i].first) < rank(rows[j].first); });
  json sorted = json::array();
  std::vector<std::pair<std::string, SingularityReport>> sorted_rows;
  for (std::size_t i : order) {
    sorted.push_back(sings[i]);
    sorted_rows.push_back(rows[i]);
  }
  out.doc["singularities"] = std::move(sorted);
  out.doc["all_nonresonant"] = all_nonresonant;
  out.doc["origin_stable_kopell_m"] = detail::optional_int(origin_m);
  out.table = detail::singularity_table(sorted_rows, 3);
  return out;
}

inline Report run_commutant(const json& cfg) {
  detail::check_top_level(cfg, {"candidates", "exp_times"});
  const json tol = detail::tolerances(cfg, {"rank", "proportional", "commutes"});
  const json& sys = field(cfg, "system", "config");
  allow_keys(sys, {"kind", "matrix"}, "system");
  if (string(sys, "kind", "system", "linear") != "linear") throw ValidationError("system: commutant needs kind 'linear'");
  const Mat b = matrix(field(sys, "matrix", "system"), "system.matrix");
  if (b.rows() != b.cols()) throw ValidationError("system.matrix: must be square");
  if (b.rows() > kMaxMatrixDim) throw ValidationError("system.matrix: dimension above " + std::to_string(kMaxMatrixDim));
  const double tol_rank = detail::positive(tol, "rank", "tolerances", kDefaultRankTol);
  const double tol_prop = detail::positive(tol, "proportional", "tolerances", kDefaultRankTol);
  const double tol_comm = detail::positive(tol, "commutes", "tolerances", 1e-9);
  std::vector<double> times{1.0};
  if (cfg.contains("exp_times")) times = numbers(cfg.at("exp_times"), "exp_times");

  const auto basis = commutant_basis(b, tol_rank);
  Report out;
  out.doc["subcommand"] = "commutant";
  out.doc["dimension"] = b.rows();
  out.doc["eigenvalues"] = detail::eigen_list(eigs(b).values);
  out.doc["commutant_dimension"] = basis.dimension();
  double worst = 0;
  json mats = json::array();
  out.table.header = {"basis", "row", "col", "value"};
  for (std::size_t k = 0; k < basis.basis.size(); ++k) {
    const Mat& c = basis.basis[k];
    worst = std::max(worst, (b * c - c * b).norm());
    mats.push_back(to_json(c));
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index j = 0; j < c.cols(); ++j)
        out.table.rows.push_back({cell(k), cell(static_cast<long>(i)), cell(static_cast<long>(j)), cell(c(i, j))});
  }
  out.doc["basis"] = std::move(mats);
  out.doc["max_commutator_residual"] = worst;

  json cands = json::array();
  if (cfg.contains("candidates")) {
    const json& list = cfg.at("candidates");
    if (!list.is_array()) throw ValidationError("candidates: expected an array of matrices");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "candidates[" + std::to_string(k) + "]";
      const Mat c = matrix(list[k], where);
      if (c.rows() != b.rows() || c.cols() != b.cols()) throw ValidationError(where + ": dimension mismatch");
      const double comm = (b * c - c * b).norm();
      const bool commutes = comm <= tol_comm * std::max(1.0, b.norm() * c.norm());
      const auto prop = is_proportional(c, b, tol_prop);
      double exp_defect = 0;
      for (double t : times) {
        for (double s : times) {
          const Mat eb = mat_exp(b, t), ec = mat_exp(c, s);
          exp_defect = std::max(exp_defect, (eb * ec - ec * eb).norm());
        }
      }
      json j;
      j["commutator_norm"] = comm;
      j["commutes"] = commutes;
      j["proportional"] = prop.verdict;
      j["factor"] = prop.factor ? json(*prop.factor) : json(nullptr);
      j["exp_commutator_defect"] = exp_defect;
      cands.push_back(std::move(j));
    }
  }
  out.doc["candidates"] = std::move(cands);
  return out;
}

inline Report run_reparam(const json& cfg) {
  detail::check_top_level(cfg, {"partner", "points", "t_grid", "t_checks", "window", "period", "hint", "commutation_times"});
  const json tol = detail::tolerances(cfg, {"integration", "match", "A", "commutation"});
  const VectorField x_field = parse_field(field(cfg, "system", "config"), "system");
  const VectorField y_field = parse_field(field(cfg, "partner", "config"), "partner");
  if (x_field.dim() != y_field.dim()) throw ValidationError("partner: dimension differs from system");
  const auto pts = points(field(cfg, "points", "config"), "points", x_field.dim());
  std::vector<double> t_grid{-1.0, -0.5, 0.5, 1.0}, t_checks{0.5, -0.7}, comm_times{0.37, -0.61};
  if (cfg.contains("t_grid")) t_grid = numbers(cfg.at("t_grid"), "t_grid");
  if (cfg.contains("t_checks")) t_checks = numbers(cfg.at("t_checks"), "t_checks");
  if (cfg.contains("commutation_times")) comm_times = numbers(cfg.at("commutation_times"), "commutation_times");
  const double tol_int = detail::positive(tol, "integration", "tolerances", kDefaultTolInt);
  const double tol_match = detail::positive(tol, "match", "tolerances", kDefaultTolMatch);
  const double tol_A = detail::positive(tol, "A", "tolerances", kDefaultTolA);
  const double tol_comm = detail::positive(tol, "commutation", "tolerances", 1e-6);
  TrivialityHint hint;
  if (cfg.contains("hint")) {
    allow_keys(cfg.at("hint"), {"stable_manifold_dense"}, "hint");
    hint.stable_manifold_dense = boolean(cfg.at("hint"), "stable_manifold_dense", "hint", false);
  }

  const auto comm = check_commuting(x_field, y_field, pts, comm_times, tol_int, tol_comm);
  if (!comm.commuting) {
    std::ostringstream os;
    os << "partner: does not commute with system (bracket " << comm.bracket << ", flow defect " << comm.flow_defect << ")";
    throw ValidationError(os.str());
  }
  const OdeFlow phi(x_field, tol_int), psi(y_field, tol_int);

  double eps0 = std::numeric_limits<double>::infinity();
  ReparamOptions opt;
  if (cfg.contains("window")) {
    const json& w = cfg.at("window");
    allow_keys(w, {"mu", "eps_cap", "level", "scan_points"}, "window");
    opt.mu = detail::positive(w, "mu", "window", opt.mu);
    opt.eps_cap = detail::positive(w, "eps_cap", "window", opt.eps_cap);
    if (w.contains("level")) opt.level = static_cast<int>(integer(w, "level", "window"));
    opt.scan_points = static_cast<int>(integer(w, "scan_points", "window", opt.scan_points));
    opt.tol_match = tol_match;
    opt.validate();
  } else {
    PeriodProbeOptions po;
    double cap = 0.3;
    if (cfg.contains("period")) {
      const json& p = cfg.at("period");
      allow_keys(p, {"t_max", "dt", "fallback_cap"}, "period");
      po.t_max = detail::positive(p, "t_max", "period", po.t_max);
      po.dt_out = detail::positive(p, "dt", "period", po.dt_out);
      cap = detail::positive(p, "fallback_cap", "period", cap);
    }
    eps0 = min_period_probe(phi, pts, po).eps0_upper;
    opt = choose_window(phi, psi, pts, eps0, cap, tol_match);
  }

  const auto rf = build_reparam_field(phi, psi, pts, t_grid, t_checks, opt, hint, tol_A);
  Report out;
  out.doc["subcommand"] = "reparam";
  out.doc["commutation"] = {{"bracket", comm.bracket}, {"flow_defect", comm.flow_defect}};
  out.doc["period_upper_bound"] = finite_or_tag(eps0);
  out.doc["window"] = {{"mu", opt.mu}, {"eps_cap", opt.eps_cap}, {"level", opt.dyadic_level()}};
  json samples = json::array();
  const Eigen::Index n = x_field.dim();
  out.table.header = detail::coordinate_names("x", n);
  for (const char* c : {"A", "inv_residual", "lin_residual"}) out.table.header.push_back(c);
  for (const auto& s : rf.samples) {
    samples.push_back({{"point", to_json(s.point)},
                       {"A", s.A},
                       {"invariance_residual", s.invariance_residual},
                       {"linearity_residual", s.linearity_residual}});
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(cell(s.point(i)));
    row.push_back(cell(s.A));
    row.push_back(cell(s.invariance_residual));
    row.push_back(cell(s.linearity_residual));
    out.table.rows.push_back(std::move(row));
  }
  out.doc["samples"] = std::move(samples);
  out.doc["orbit_invariance_residual"] = rf.orbit_invariance_residual;
  out.doc["linearity_residual"] = rf.linearity_residual;
  out.doc["t_scale"] = rf.t_scale;
  out.doc["verdict"] = {{"kind", rf.verdict.name()},
                        {"constant", rf.verdict.constant ? json(*rf.verdict.constant) : json(nullptr)},
                        {"reason", rf.verdict.reason}};
  return out;
}

namespace detail {

inline std::vector<VectorField> generator_list(const json& j, const std::string& where) {
  allow_keys(j, {"generators"}, where);
  const json& gens = field(j, "generators", where);
  if (!gens.is_array() || gens.empty()) throw ValidationError(where + ".generators: expected a non-empty array");
  std::vector<VectorField> out;
  for (std::size_t k = 0; k < gens.size(); ++k) out.push_back(parse_field(gens[k], where + ".generators[" + std::to_string(k) + "]"));
  return out;
}

}  // namespace detail

inline Report run_action(const json& cfg) {
  detail::check_top_level(cfg, {"partner", "samples", "v_checks", "period"});
  const json tol = detail::tolerances(cfg, {"integration", "commutation", "rank"});
  const auto gens = detail::generator_list(field(cfg, "system", "config"), "system");
  const Eigen::Index n = gens.front().dim();
  const auto samples = points(field(cfg, "samples", "config"), "samples", n);
  const double tol_int = detail::positive(tol, "integration", "tolerances", kDefaultTolInt);
  const double tol_comm = detail::positive(tol, "commutation", "tolerances", kDefaultTolComm);
  const double tol_rank = detail::positive(tol, "rank", "tolerances", 1e-9);
  const Action phi(gens, samples, tol_comm, tol_int);
  const int d = phi.rank();
  std::vector<Vec> v_checks;
  if (cfg.contains("v_checks")) {
    v_checks = points(cfg.at("v_checks"), "v_checks", d);
  } else {
    for (int i = 0; i < d; ++i) {
      v_checks.push_back(Vec::Unit(d, i));
      v_checks.push_back(-Vec::Unit(d, i));
    }
  }

  Report out;
  out.doc["subcommand"] = "action";
  out.doc["rank"] = d;
  out.doc["dimension"] = n;
  out.doc["commutation_residual"] = phi.commutation_residual();
  const auto hom = check_homogeneous(gens, samples, tol_rank);
  out.doc["homogeneity"] = {{"homogeneous", hom.homogeneous}, {"min_singular_value", finite_or_tag(hom.min_singular_value)}};
  if (cfg.contains("period")) {
    const json& p = cfg.at("period");
    allow_keys(p, {"radius", "tol_close"}, "period");
    const auto per = action_min_period(phi, samples, detail::positive(p, "radius", "period", 1.0),
                                       detail::positive(p, "tol_close", "period", 1e-6));
    out.doc["period"] = {{"eps0_upper", finite_or_tag(per.eps0_upper)},
                         {"vector", per.period ? to_json(*per.period) : json(nullptr)}};
  } else {
    out.doc["period"] = nullptr;
  }

  out.table.header = detail::coordinate_names("x", n);
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) out.table.header.push_back("a_" + std::to_string(i) + "_" + std::to_string(j));
  out.table.header.push_back("frame_residual");
  if (cfg.contains("partner")) {
    const auto pgens = detail::generator_list(cfg.at("partner"), "partner");
    if (static_cast<int>(pgens.size()) != d) throw ValidationError("partner: rank differs from system");
    if (pgens.front().dim() != n) throw ValidationError("partner: dimension differs from system");
    const Action psi(pgens, samples, tol_comm, tol_int);
    const auto rep = action_reparam_field(phi, psi, samples, v_checks, tol_comm);
    json ss = json::array();
    for (const auto& s : rep.samples) {
      ss.push_back({{"point", to_json(s.point)}, {"A", to_json(s.A)}, {"frame_residual", s.frame_residual}});
      std::vector<std::string> row;
      for (Eigen::Index i = 0; i < n; ++i) row.push_back(cell(s.point(i)));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) row.push_back(cell(s.A(i, j)));
      row.push_back(cell(s.frame_residual));
      out.table.rows.push_back(std::move(row));
    }
    out.doc["reparam"] = {{"samples", std::move(ss)},
                          {"invariance_residual", rep.invariance_residual},
                          {"certification_residual", rep.certification_residual},
                          {"frame_residual", rep.frame_residual},
                          {"cross_commutation", rep.cross_commutation}};
  } else {
    out.doc["reparam"] = nullptr;
  }
  return out;
}

namespace detail {

inline SuspensionPoint suspension_point(const json& j, const BaseAction& action, const std::string& where) {
  allow_keys(j, {"base", "heights"}, where);
  SuspensionPoint p{vector(field(j, "base", where), where + ".base"), vector(field(j, "heights", where), where + ".heights")};
  if (p.base.size() != action.dim()) throw ValidationError(where + ".base: expected " + std::to_string(action.dim()) + " coordinates");
  if (p.heights.size() != action.rank()) throw ValidationError(where + ".heights: expected " + std::to_string(action.rank()) + " heights");
  return normalize(action, p.base, p.heights);
}

inline json point_json(const SuspensionPoint& p) { return {{"base", to_json(p.base)}, {"heights", to_json(p.heights)}}; }

}  // namespace detail

inline Report run_suspend(const json& cfg, std::uint64_t seed) {
  detail::check_top_level(cfg, {"queries", "transfer"});
  detail::tolerances(cfg, {});
  const json& sys = field(cfg, "system", "config");
  allow_keys(sys, {"generators"}, "system");
  const json& gens = field(sys, "generators", "system");
  if (!gens.is_array() || gens.empty()) throw ValidationError("system.generators: expected a non-empty array of maps");
  std::vector<BaseMap> maps;
  for (std::size_t k = 0; k < gens.size(); ++k) maps.push_back(parse_map(gens[k], "system.generators[" + std::to_string(k) + "]"));
  const BaseAction action(maps);

  Report out;
  out.doc["subcommand"] = "suspend";
  out.doc["rank"] = action.rank();
  out.doc["base_dimension"] = action.dim();
  out.doc["lipschitz"] = action.lipschitz();
  out.table.header = {"query", "chain_length", "grid_step", "vertical_distance", "links", "defect"};

  json queries = json::array();
  if (cfg.contains("queries")) {
    const json& list = cfg.at("queries");
    if (!list.is_array()) throw ValidationError("queries: expected an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "queries[" + std::to_string(k) + "]";
      allow_keys(list[k], {"p", "q", "resolution"}, where);
      const SuspensionPoint p = detail::suspension_point(field(list[k], "p", where), action, where + ".p");
      const SuspensionPoint q = detail::suspension_point(field(list[k], "q", where), action, where + ".q");
      ChainResolution res;
      if (list[k].contains("resolution")) {
        const json& r = list[k].at("resolution");
        allow_keys(r, {"base_per_axis", "heights", "max_nodes"}, where + ".resolution");
        res.base_per_axis = static_cast<int>(detail::count(r, "base_per_axis", where + ".resolution", res.base_per_axis));
        res.heights = static_cast<int>(detail::count(r, "heights", where + ".resolution", res.heights));
        res.max_nodes = detail::count(r, "max_nodes", where + ".resolution", static_cast<long>(res.max_nodes));
      }
      const auto est = chain_metric(action, p, q, res);
      const auto vert = vertical_distance(action, p, q);
      const double defect = chain_defect(action, est.path);
      json j;
      j["p"] = detail::point_json(p);
      j["q"] = detail::point_json(q);
      j["chain_length"] = est.length;
      j["grid_step"] = grid_step(res);
      j["vertical_distance"] = vert ? json(*vert) : json(nullptr);
      j["base_tilde_rho"] = tilde_rho(action, p.base, q.base);
      const bool same_fiber = (p.heights - q.heights).cwiseAbs().maxCoeff() <= 1e-12;
      j["fiber_distance"] = same_fiber ? json(rho_h(action, p, q)) : json(nullptr);
      j["defect"] = defect;
      json nodes = json::array(), links = json::array();
      for (const auto& nd : est.path.nodes) nodes.push_back(detail::point_json(nd));
      for (const auto& l : est.path.links) {
        links.push_back({{"kind", l.kind == ChainLink::Kind::vertical ? "vertical" : "horizontal"},
                         {"length", l.length},
                         {"displacement", l.kind == ChainLink::Kind::vertical ? to_json(l.displacement) : json(nullptr)}});
      }
      j["path"] = {{"nodes", std::move(nodes)}, {"links", std::move(links)}};
      queries.push_back(std::move(j));
      out.table.rows.push_back({cell(k), cell(est.length), cell(grid_step(res)), vert ? cell(*vert) : "",
                                cell(est.path.links.size()), cell(defect)});
    }
  }
  out.doc["queries"] = std::move(queries);

  if (cfg.contains("transfer")) {
    const json& t = cfg.at("transfer");
    allow_keys(t, {"eps", "delta", "pairs", "horizon", "grid_step", "h_maps"}, "transfer");
    TransferOptions to;
    to.eps = detail::positive(t, "eps", "transfer", to.eps);
    to.delta = detail::positive(t, "delta", "transfer", to.delta);
    to.pairs = detail::count(t, "pairs", "transfer", static_cast<long>(to.pairs));
    to.horizon = static_cast<int>(detail::count(t, "horizon", "transfer", to.horizon));
    to.grid_step = detail::positive(t, "grid_step", "transfer", to.grid_step);
    to.h_maps = static_cast<int>(integer(t, "h_maps", "transfer", to.h_maps));
    if (to.h_maps < 0) throw ValidationError("transfer.h_maps: must be nonnegative");
    to.seed = seed;
    const auto rep = transfer_test(action, to);
    json j;
    j["options"] = {{"eps", to.eps}, {"delta", to.delta}, {"pairs", to.pairs}, {"horizon", to.horizon},
                    {"grid_step", to.grid_step}, {"h_maps", to.h_maps}, {"seed", seed}};
    if (rep.base.violation) {
      const auto& v = *rep.base.violation;
      j["base_violation"] = {{"x", to_json(v.x)}, {"y", to_json(v.y)}, {"sup_distance", v.sup_distance}, {"pair_index", v.pair_index}};
    } else {
      j["base_violation"] = nullptr;
    }
    j["base_pairs_tested"] = rep.base.pairs_tested;
    if (rep.suspension.counterexample) {
      const auto& c = *rep.suspension.counterexample;
      j["suspension_counterexample"] = {{"x", to_json(c.x)},
                                        {"y", to_json(c.y)},
                                        {"closeness", c.closeness},
                                        {"separation", c.separation},
                                        {"pair_index", c.pair_index}};
    } else {
      j["suspension_counterexample"] = nullptr;
    }
    j["suspension_pairs_tested"] = rep.suspension.pairs_tested;
    j["agree"] = rep.agree();
    out.doc["transfer"] = std::move(j);
  } else {
    out.doc["transfer"] = nullptr;
  }
  return out;
}

namespace detail {

struct SamplerSpec {
  PairSampler pairs;
  PointSampler points;
  std::optional<double> diameter;
};

inline SamplerSpec parse_sampler(const json& j, Eigen::Index dim, bool periodic, double radius) {
  const std::string kind = string(j, "kind", "sampler");
  SamplerSpec s;
  if (kind == "uniform_torus") {
    allow_keys(j, {"kind", "radius"}, "sampler");
    if (!periodic) throw ValidationError("sampler: uniform_torus needs a periodic system");
    s.points = uniform_torus(dim);
    s.diameter = std::sqrt(static_cast<double>(dim)) / 2.0;
  } else if (kind == "box") {
    allow_keys(j, {"kind", "lo", "hi", "radius"}, "sampler");
    const Vec lo = vector(field(j, "lo", "sampler"), "sampler.lo"), hi = vector(field(j, "hi", "sampler"), "sampler.hi");
    if (lo.size() != dim || hi.size() != dim || (hi - lo).minCoeff() <= 0) throw ValidationError("sampler: box needs lo < hi in every coordinate");
    s.points = uniform_box(lo, hi);
    s.diameter = (hi - lo).norm();
  } else if (kind == "points") {
    allow_keys(j, {"kind", "points", "radius"}, "sampler");
    auto pts = points(field(j, "points", "sampler"), "sampler.points", dim);
    double diam = 0;
    for (const auto& a : pts)
      for (const auto& b : pts) diam = std::max(diam, (a - b).norm());
    if (diam > 0) s.diameter = diam;
    s.points = from_points(std::move(pts));
  } else {
    throw ValidationError("sampler: unknown kind '" + kind + "'");
  }
  s.pairs = nearby_pairs(s.points, number(j, "radius", "sampler", radius));
  return s;
}

inline json counterexample_json(const Counterexample& ce) {
  json align = json::array();
  for (const auto& b : ce.alignment.alignment) align.push_back(json::array({b.t, b.h}));
  return {{"pair_index", ce.pair_index},
          {"x", to_json(ce.x)},
          {"y", to_json(ce.y)},
          {"mode", std::string(mode_name(ce.alignment.mode))},
          {"cost", ce.alignment.cost},
          {"closeness_margin", ce.closeness_margin},
          {"separation", ce.separation},
          {"alignment", std::move(align)}};
}

}  // namespace detail

inline Report run_probe(const json& cfg, std::uint64_t seed) {
  detail::check_top_level(cfg, {"notion", "eps", "delta", "pairs", "horizon", "back", "dt", "max_shift", "sampler",
                                "revalidate", "period"});
  const json tol = detail::tolerances(cfg, {"integration", "separation"});
  const json& sys = field(cfg, "system", "config");
  const double tol_int = detail::positive(tol, "integration", "tolerances", kDefaultTolInt);
  using AnyFlow = std::variant<OdeFlow, Suspension1dFlow>;
  const AnyFlow flow = string(sys, "kind", "system") == "suspension1d"
                           ? AnyFlow(parse_suspension1d(sys, "system"))
                           : AnyFlow(OdeFlow(parse_field(sys, "system"), tol_int));
  const bool periodic = std::holds_alternative<Suspension1dFlow>(flow) ||
                        std::ranges::all_of(std::get<OdeFlow>(flow).field().domain().periodic, [](bool p) { return p; });

  const std::string notion_str = string(cfg, "notion", "config", "komuro");
  Notion notion;
  if (notion_str == "komuro") notion = Notion::komuro;
  else if (notion_str == "kinematic") notion = Notion::kinematic;
  else if (notion_str == "c_expansive") notion = Notion::c_expansive;
  else throw ValidationError("notion: expected komuro, kinematic or c_expansive");

  ProbeOptions opt;
  opt.delta = detail::positive(cfg, "delta", "config", opt.delta);
  opt.pairs = detail::count(cfg, "pairs", "config", static_cast<long>(opt.pairs));
  opt.horizon = detail::positive(cfg, "horizon", "config", opt.horizon);
  if (cfg.contains("back")) opt.back = number(cfg, "back", "config");
  opt.dt = detail::positive(cfg, "dt", "config", opt.dt);
  if (cfg.contains("max_shift")) opt.max_shift = detail::positive(cfg, "max_shift", "config", 1.0);
  opt.sep_tol = detail::positive(tol, "separation", "tolerances", opt.sep_tol);
  opt.seed = seed;
  const bool do_revalidate = boolean(cfg, "revalidate", "config", true);

  return std::visit(
      [&](const auto& f) {
        const Eigen::Index dim = f.dim();
        json default_sampler{{"kind", "uniform_torus"}};
        const json& sampler_cfg = cfg.contains("sampler") ? cfg.at("sampler") : default_sampler;
        if (!cfg.contains("sampler") && !periodic) throw ValidationError("sampler: required for non-periodic systems");
        // uniform_torus on a suspension samples the base and height together
        const auto sampler = detail::parse_sampler(sampler_cfg, dim, periodic, opt.delta / 2.0);

        std::string eps_source = "config";
        double eps0 = std::numeric_limits<double>::infinity();
        if (cfg.contains("eps")) {
          opt.eps = detail::positive(cfg, "eps", "config", opt.eps);
        } else {
          if (!sampler.diameter) throw ValidationError("eps: required when the sampler has no extent");
          PeriodProbeOptions po;
          std::size_t count = 8;
          if (cfg.contains("period")) {
            const json& p = cfg.at("period");
            allow_keys(p, {"t_max", "dt", "samples"}, "period");
            po.t_max = detail::positive(p, "t_max", "period", po.t_max);
            po.dt_out = detail::positive(p, "dt", "period", po.dt_out);
            count = detail::count(p, "samples", "period", static_cast<long>(count));
          }
          Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
          std::vector<Vec> starts;
          for (std::size_t k = 0; k < count; ++k) starts.push_back(sampler.points(rng));
          eps0 = min_period_probe(f, starts, po).eps0_upper;
          opt.eps = default_eps(eps0, *sampler.diameter);
          eps_source = std::isfinite(eps0) ? "period" : "diameter";
        }
        opt.validate();
        const ProbeReport rep = violation_search(f, notion, sampler.pairs, opt);

        Report out;
        out.doc["subcommand"] = "probe";
        out.doc["notion"] = std::string(notion_name(notion));
        out.doc["mode"] = std::string(mode_name(mode_for(notion)));
        out.doc["resolution"] = {{"eps", opt.eps},
                                 {"eps_source", eps_source},
                                 {"period_upper_bound", finite_or_tag(eps0)},
                                 {"delta", opt.delta},
                                 {"horizon", opt.horizon},
                                 {"back", opt.backward()},
                                 {"dt", opt.dt},
                                 {"max_shift", opt.max_shift.value_or(opt.backward() / 2.0)},
                                 {"pairs", opt.pairs},
                                 {"seed", seed}};
        out.doc["pairs_tested"] = rep.pairs_tested;
        out.doc["close_pairs"] = rep.close_pairs;
        out.table.header = {"t", "h"};
        if (rep.counterexample) {
          out.doc["verdict"] = "counterexample";
          out.doc["counterexample"] = detail::counterexample_json(*rep.counterexample);
          for (const auto& b : rep.counterexample->alignment.alignment) out.table.rows.push_back({cell(b.t), cell(b.h)});
          if (do_revalidate) {
            const auto rv = revalidate(f, *rep.counterexample, 10.0, opt.sep_tol);
            out.doc["revalidation"] = {{"factor", 10.0},
                                       {"holds", rv.holds},
                                       {"closeness_margin", rv.closeness_margin},
                                       {"separation", rv.separation}};
          } else {
            out.doc["revalidation"] = nullptr;
          }
        } else {
          out.doc["verdict"] = "no violation at this resolution";
          out.doc["counterexample"] = nullptr;
          out.doc["revalidation"] = nullptr;
        }
        return out;
      },
      flow);
}

/// Validates the subcommand against the config and dispatches.
inline Report run(const std::string& subcommand, const json& cfg, std::uint64_t seed) {
  if (cfg.contains("subcommand")) {
    if (!cfg.at("subcommand").is_string() || cfg.at("subcommand").get<std::string>() != subcommand) {
      throw ValidationError("config: subcommand field does not match '" + subcommand + "'");
    }
  }
  if (subcommand == "spectra") return run_spectra(cfg);
  if (subcommand == "lorenz-demo") return run_lorenz_demo(cfg);
  if (subcommand == "commutant") return run_commutant(cfg);
  if (subcommand == "reparam") return run_reparam(cfg);
  if (subcommand == "action") return run_action(cfg);
  if (subcommand == "suspend") return run_suspend(cfg, seed);
  if (subcommand == "probe") return run_probe(cfg, seed);
  throw ValidationError("unknown subcommand '" + subcommand + "'");
}

}  // namespace flowcent::cli
