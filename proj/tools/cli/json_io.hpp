#pragma once

// Strict JSON config access: every object declares the keys it accepts and
// anything else is a validation error.

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowcent/basemap.hpp"
#include "flowcent/field.hpp"
#include "flowcent/suspension_flow.hpp"

namespace flowcent::cli {

using json = nlohmann::ordered_json;

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* allowed : keys) known = known || k == allowed;
    if (!known) throw ValidationError(where + ": unknown field '" + k + "'");
  }
}

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(where + ": must be finite");
  return v;
}

inline double number(const json& j, const char* key, const std::string& where, std::optional<double> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  return number(j.at(key), where + "." + key);
}

inline std::optional<double> maybe_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  return number(j.at(key), where + "." + key);
}

inline long integer(const json& j, const char* key, const std::string& where, std::optional<long> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(where + "." + key + ": expected an integer");
  return v.get<long>();
}

inline bool boolean(const json& j, const char* key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ValidationError(where + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

inline std::string string(const json& j, const char* key, const std::string& where,
                          std::optional<std::string> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  if (!j.at(key).is_string()) throw ValidationError(where + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

inline Vec vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
  return v;
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  const Vec v = vector(j, where);
  return {v.data(), v.data() + v.size()};
}

inline std::vector<Vec> points(const json& j, const std::string& where, std::optional<Eigen::Index> dim = {}) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of points");
  std::vector<Vec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(vector(j[i], where + "[" + std::to_string(i) + "]"));
    if (dim && out.back().size() != *dim) {
      throw ValidationError(where + "[" + std::to_string(i) + "]: expected " + std::to_string(*dim) + " coordinates");
    }
  }
  return out;
}

/// Matrices are arrays of rows.
inline Mat matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError(where + ": expected an array of rows");
  const std::size_t rows = j.size(), cols = j[0].size();
  if (cols == 0) throw ValidationError(where + ": empty row");
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ValidationError(where + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], where);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Specs.

inline ScalarFactor parse_factor(const json& j, const std::string& where) {
  const std::string kind = string(j, "kind", where);
  if (kind == "constant") {
    allow_keys(j, {"kind", "value"}, where);
    return ScalarFactor(ConstantFactor{number(j, "value", where)});
  }
  if (kind == "sine_ridge") {
    allow_keys(j, {"kind", "offset", "amplitude", "w"}, where);
    return ScalarFactor(SineRidge{number(j, "offset", where), number(j, "amplitude", where), vector(field(j, "w", where), where + ".w")});
  }
  if (kind == "bump") {
    allow_keys(j, {"kind", "center", "sharpness"}, where);
    return ScalarFactor(TorusBump{vector(field(j, "center", where), where + ".center"), number(j, "sharpness", where, 10.0)});
  }
  throw ValidationError(where + ": unknown factor kind '" + kind + "'");
}

inline BaseMap parse_map(const json& j, const std::string& where) {
  const std::string kind = string(j, "kind", where);
  if (kind == "identity") {
    allow_keys(j, {"kind", "dim"}, where);
    return BaseMap::identity(static_cast<int>(integer(j, "dim", where, 1)));
  }
  if (kind == "rotation") {
    allow_keys(j, {"kind", "rho"}, where);
    return BaseMap::rotation(vector(field(j, "rho", where), where + ".rho"));
  }
  if (kind == "automorphism") {
    allow_keys(j, {"kind", "matrix"}, where);
    return BaseMap::automorphism(matrix(field(j, "matrix", where), where + ".matrix"));
  }
  throw ValidationError(where + ": unknown map kind '" + kind + "'");
}

inline VectorField parse_field(const json& j, const std::string& where) {
  const std::string kind = string(j, "kind", where);
  return [&]() -> VectorField {
    if (kind == "lorenz") {
      allow_keys(j, {"kind", "a", "b", "r"}, where);
      return VectorField::lorenz(number(j, "a", where, 10.0), number(j, "b", where, 8.0 / 3.0), number(j, "r", where, 28.0));
    }
    if (kind == "linear") {
      allow_keys(j, {"kind", "matrix"}, where);
      return VectorField::linear(matrix(field(j, "matrix", where), where + ".matrix"));
    }
    if (kind == "torus_translation") {
      allow_keys(j, {"kind", "alpha"}, where);
      return VectorField::torus_translation(vector(field(j, "alpha", where), where + ".alpha"));
    }
    if (kind == "damped_torus") {
      allow_keys(j, {"kind", "alpha", "center", "sharpness"}, where);
      return VectorField::damped_torus(vector(field(j, "alpha", where), where + ".alpha"),
                                       vector(field(j, "center", where), where + ".center"),
                                       number(j, "sharpness", where, 10.0));
    }
    if (kind == "scaled") {
      allow_keys(j, {"kind", "factor", "base"}, where);
      return VectorField::scaled(parse_factor(field(j, "factor", where), where + ".factor"),
                                 parse_field(field(j, "base", where), where + ".base"));
    }
    if (kind == "polynomial") {
      allow_keys(j, {"kind", "dimension", "terms", "torus"}, where);
      const int n = static_cast<int>(integer(j, "dimension", where));
      if (n < 1 || n > 16) throw ValidationError(where + ".dimension: must be in 1..16");
      const json& terms = field(j, "terms", where);
      if (!terms.is_array()) throw ValidationError(where + ".terms: expected an array");
      std::vector<Monomial> mons;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        const std::string w = where + ".terms[" + std::to_string(k) + "]";
        allow_keys(terms[k], {"component", "coefficient", "exponents"}, w);
        Monomial m;
        m.component = static_cast<int>(integer(terms[k], "component", w));
        m.coefficient = number(terms[k], "coefficient", w);
        const Vec e = vector(field(terms[k], "exponents", w), w + ".exponents");
        for (Eigen::Index i = 0; i < e.size(); ++i) {
          if (e(i) < 0 || e(i) != std::floor(e(i))) throw ValidationError(w + ".exponents: must be nonnegative integers");
          m.exponents.push_back(static_cast<int>(e(i)));
        }
        mons.push_back(std::move(m));
      }
      if (boolean(j, "torus", where, false)) return VectorField::polynomial(n, std::move(mons), Domain::torus(static_cast<std::size_t>(n)));
      return VectorField::polynomial(n, std::move(mons));
    }
    if (kind == "suspension1d") throw ValidationError(where + ": suspension1d is a flow, not a vector field; only 'probe' accepts it");
    throw ValidationError(where + ": unknown field kind '" + kind + "'");
  }();
}

inline Suspension1dFlow parse_suspension1d(const json& j, const std::string& where) {
  allow_keys(j, {"kind", "map", "roof"}, where);
  return Suspension1dFlow(parse_map(field(j, "map", where), where + ".map"), parse_factor(field(j, "roof", where), where + ".roof"));
}

// ---------------------------------------------------------------------------
// Output helpers.

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

inline json to_json(const Complex& z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

/// Finite numbers as numbers, infinities as the strings "inf" / "-inf".
inline json finite_or_tag(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

/// Tabular report for CSV output.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }
inline std::string cell(const std::string& s) { return s; }
inline std::string cell(const char* s) { return s; }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string render_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(cells[i]);
    }
    out += "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw NumericalError("csv: row width does not match the header");
    line(r);
  }
  return out;
}

}  // namespace flowcent::cli
