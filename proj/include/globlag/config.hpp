#pragma once

// Problem configuration: JSON document -> atlas, per-chart source forms,
// optional cover and numerics.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "globlag/atlas.hpp"
#include "globlag/cohomology.hpp"
#include "globlag/expr.hpp"
#include "globlag/jet.hpp"
#include "globlag/sampling.hpp"
#include "globlag/varcheck.hpp"

namespace globlag {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Numerics {
  double tol_symbolic = 1e-9;    // Helmholtz residuals, identities of exact expressions
  double tol_quadrature = 1e-6;  // E(lambda) = eps on the simple path
  double tol_cohomology = 1e-4;  // d(eta) = omega and E(lambda) = eps on the cohomology path
  double tol_globality = 1e-8;
  double tol_omega = 1e-12;
  double tol_obstruction = 1e-6;
  double tol_mass = 1e-8;
  int samples = 200;
  int verify_samples = 200;
  std::uint64_t seed = 42;
  int quadrature_order = 16;
  int cohomology_order = 16;
  int cohomology_min_panels = 12;
  double position_limit = 10.0;
  double velocity = 2.0;
  double acceleration = 2.0;
  double fd_step_first = 1e-5;
  double fd_step_nested = 1e-3;
  double fd_step_nested_eta = 3e-4;  // cohomology path: resolves the partition-of-unity features of eta
  double chart_margin = 0.01;  // verification points keep this distance from chart edges

  SampleRanges ranges() const {
    SampleRanges r;
    r.position_limit = position_limit;
    r.velocity = velocity;
    r.acceleration = acceleration;
    return r;
  }
};

struct ProblemFlags {
  bool time_independent = true;
  bool orientable = true;
  bool compact = false;
};

struct ProblemConfig {
  std::string name;
  std::string description;
  Binding constants;
  ProblemFlags flags;
  Atlas atlas;
  std::map<std::string, std::array<std::string, 2>> source_text;
  std::map<std::string, SourceForm> source_forms;
  std::optional<CoverSpec> cover;
  Numerics numerics;
  std::map<std::string, Expression> lagrangians;
  std::map<std::string, std::string> lagrangian_text;

  const Chart& chart(const std::string& name) const { return atlas.chart(name); }
  std::vector<std::string> chart_names() const {
    std::vector<std::string> out;
    for (const auto& c : atlas.charts()) out.push_back(c.name);
    return out;
  }
};

// Chart coordinate names a, b become x, y; their derivatives ad, bd, add, ...
// become xd, yd, xdd, ...
inline ParseOptions chart_parse_options(const Chart& c, const Binding& constants) {
  ParseOptions o;
  o.constants = constants;
  std::string suffix;
  for (int k = 0; k <= kMaxJetOrder; ++k) {
    for (int i = 0; i < 2; ++i) {
      const std::string canon = std::string(i == 0 ? "x" : "y") + suffix;
      const std::string name = c.coords[i] + suffix;
      if (name != canon) o.renames[name] = canon;
    }
    suffix += "d";
  }
  return o;
}

namespace detail {

using nlohmann::json;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline Expression parse_field(const std::string& text, const ParseOptions& o, const std::string& where) {
  try {
    return parse(text, o);
  } catch (const ExprError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline double bound_value(const json& v, const Binding& constants, double dflt, const std::string& where) {
  if (v.is_null()) return dflt;
  if (v.is_number()) return v.get<double>();
  require(v.is_string(), where + ": bound must be a number, an expression string or null");
  const std::string s = v.get<std::string>();
  if (s == "inf" || s == "+inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  Expression e = parse_field(s, {constants, {}}, where);
  require(e.free_vars().empty(), where + ": bound must be constant");
  return e.evaluate({});
}

inline Interval parse_interval(const json& v, const Binding& constants, const std::string& where) {
  require(v.is_array() && v.size() == 2, where + ": expected [lo, hi]");
  Interval i{bound_value(v[0], constants, -INFINITY, where), bound_value(v[1], constants, INFINITY, where)};
  require(i.lo < i.hi, where + ": empty interval");
  return i;
}

inline Box parse_box(const json& v, const Binding& constants, const std::string& where) {
  require(v.is_object() && v.contains("x") && v.contains("y"), where + ": expected {\"x\": [..], \"y\": [..]}");
  return {parse_interval(v.at("x"), constants, where + ".x"), parse_interval(v.at("y"), constants, where + ".y")};
}

inline std::vector<std::string> string_list(const json& v, const std::string& where) {
  if (v.is_string()) return {v.get<std::string>()};
  require(v.is_array(), where + ": expected a string or an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    require(e.is_string(), where + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("numerics.") + key + ": " + e.what());
    }
  }
}

inline Numerics parse_numerics(const json& v) {
  Numerics n;
  if (v.is_null()) return n;
  require(v.is_object(), "numerics must be an object");
  static const std::vector<std::string> known = {
      "tol_symbolic", "tol_quadrature", "tol_cohomology", "tol_globality", "tol_omega", "tol_obstruction",
      "tol_mass", "samples", "verify_samples", "seed", "quadrature_order", "cohomology_order",
      "cohomology_min_panels", "position_limit", "velocity", "acceleration", "fd_step_first", "fd_step_nested",
      "fd_step_nested_eta", "chart_margin"};
  for (const auto& [k, _] : v.items())
    require(std::find(known.begin(), known.end(), k) != known.end(), "numerics: unknown key '" + k + "'");
  read(v, "tol_symbolic", n.tol_symbolic);
  read(v, "tol_quadrature", n.tol_quadrature);
  read(v, "tol_cohomology", n.tol_cohomology);
  read(v, "tol_globality", n.tol_globality);
  read(v, "tol_omega", n.tol_omega);
  read(v, "tol_obstruction", n.tol_obstruction);
  read(v, "tol_mass", n.tol_mass);
  read(v, "samples", n.samples);
  read(v, "verify_samples", n.verify_samples);
  read(v, "seed", n.seed);
  read(v, "quadrature_order", n.quadrature_order);
  read(v, "cohomology_order", n.cohomology_order);
  read(v, "cohomology_min_panels", n.cohomology_min_panels);
  read(v, "position_limit", n.position_limit);
  read(v, "velocity", n.velocity);
  read(v, "acceleration", n.acceleration);
  read(v, "fd_step_first", n.fd_step_first);
  read(v, "fd_step_nested", n.fd_step_nested);
  read(v, "fd_step_nested_eta", n.fd_step_nested_eta);
  read(v, "chart_margin", n.chart_margin);
  require(n.samples > 0 && n.verify_samples > 0, "numerics: sample counts must be positive");
  require(n.quadrature_order >= 2 && n.cohomology_order >= 2 && n.cohomology_order <= 64,
          "numerics: quadrature orders out of range");
  require(n.cohomology_min_panels >= 1, "numerics: cohomology_min_panels must be positive");
  return n;
}

}  // namespace detail

inline ProblemConfig load_config(const nlohmann::json& j) {
  using detail::require;
  ProblemConfig cfg;
  require(j.is_object(), "configuration must be a JSON object");
  static const std::vector<std::string> sections = {"name",    "description", "constants",   "flags",
                                                    "charts",  "transitions", "source_form", "cover",
                                                    "numerics", "lagrangian"};
  for (const auto& [k, _] : j.items())
    require(std::find(sections.begin(), sections.end(), k) != sections.end(), "unknown section '" + k + "'");

  cfg.name = j.value("name", std::string("unnamed"));
  cfg.description = j.value("description", std::string());
  if (j.contains("constants")) {
    require(j["constants"].is_object(), "constants must be an object");
    for (const auto& [k, v] : j["constants"].items()) {
      require(v.is_number(), "constant " + k + " must be a number");
      cfg.constants[k] = v.get<double>();
    }
  }
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    require(f.is_object(), "flags must be an object");
    cfg.flags.time_independent = f.value("time_independent", true);
    cfg.flags.orientable = f.value("orientable", true);
    cfg.flags.compact = f.value("compact", false);
  }

  require(j.contains("charts") && j["charts"].is_array() && !j["charts"].empty(), "charts: expected a nonempty array");
  for (const auto& c : j["charts"]) {
    require(c.is_object() && c.contains("name") && c["name"].is_string(), "chart without a name");
    Chart ch;
    ch.name = c["name"].get<std::string>();
    auto coords = detail::string_list(c.value("coords", nlohmann::json::array({"x", "y"})), "chart " + ch.name);
    require(coords.size() == 2, "chart " + ch.name + ": coords must list two names");
    ch.coords = {coords[0], coords[1]};
    ch.domain = c.contains("domain") ? detail::parse_box(c["domain"], cfg.constants, "chart " + ch.name + ".domain")
                                     : Box{};
    try {
      cfg.atlas.add_chart(ch);
    } catch (const AtlasError& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("transitions")) {
    require(j["transitions"].is_array(), "transitions must be an array");
    for (const auto& t : j["transitions"]) {
      TransitionMap m;
      m.from = t.value("from", std::string());
      m.to = t.value("to", std::string());
      const std::string where = "transition " + m.from + " -> " + m.to;
      const Chart* src = cfg.atlas.find_chart(m.from);
      require(src && cfg.atlas.find_chart(m.to), where + ": unknown chart");
      ParseOptions po = chart_parse_options(*src, cfg.constants);
      require(t.contains("pieces") && t["pieces"].is_array(), where + ": pieces must be an array");
      for (const auto& p : t["pieces"]) {
        TransitionPiece piece;
        if (p.contains("guard"))
          for (const auto& g : detail::string_list(p["guard"], where + ".guard"))
            piece.guards.push_back(detail::parse_field(g, po, where + ".guard"));
        auto map = detail::string_list(p.at("map"), where + ".map");
        require(map.size() == 2, where + ": map must have two components");
        piece.x = detail::parse_field(map[0], po, where + ".map");
        piece.y = detail::parse_field(map[1], po, where + ".map");
        m.pieces.push_back(std::move(piece));
      }
      m.sample_box = t.contains("sample_box") ? detail::parse_box(t["sample_box"], cfg.constants, where + ".sample_box")
                                              : src->domain;
      try {
        cfg.atlas.add_transition(m);
      } catch (const AtlasError& e) {
        throw ConfigError(e.what());
      }
    }
  }

  require(j.contains("source_form") && j["source_form"].is_object(), "source_form: expected an object keyed by chart");
  for (const auto& [name, v] : j["source_form"].items()) {
    const Chart* c = cfg.atlas.find_chart(name);
    require(c, "source_form references unknown chart " + name);
    std::array<std::string, 2> text;
    if (v.is_array()) {
      auto l = detail::string_list(v, "source_form." + name);
      require(l.size() == 2, "source_form." + name + ": expected two components");
      text = {l[0], l[1]};
    } else {
      require(v.is_object() && v.contains(c->coords[0]) && v.contains(c->coords[1]),
              "source_form." + name + ": expected components named by the chart coordinates");
      text = {v[c->coords[0]].get<std::string>(), v[c->coords[1]].get<std::string>()};
    }
    ParseOptions po = chart_parse_options(*c, cfg.constants);
    Expression ex = detail::parse_field(text[0], po, "source_form." + name);
    Expression ey = detail::parse_field(text[1], po, "source_form." + name);
    try {
      jet_order(ex);
      jet_order(ey);
      cfg.source_forms.emplace(name, SourceForm(ex, ey, cfg.flags.time_independent));
    } catch (const std::exception& e) {
      throw ConfigError("source_form." + name + ": " + e.what());
    }
    cfg.source_text[name] = text;
  }
  for (const auto& c : cfg.atlas.charts())
    require(cfg.source_forms.count(c.name), "source_form missing for chart " + c.name);

  if (j.contains("cover") && !j["cover"].is_null()) {
    const auto& cv = j["cover"];
    require(cv.is_object() && cv.contains("cells") && cv["cells"].is_array(), "cover.cells must be an array");
    CoverSpec spec;
    auto parse_cell = [&](const nlohmann::json& c, const std::string& where) {
      CoverCell cell;
      require(c.is_object() && c.contains("chart") && c.contains("box"), where + ": expected chart and box");
      cell.chart = c["chart"].get<std::string>();
      require(cfg.atlas.find_chart(cell.chart), where + ": unknown chart " + cell.chart);
      cell.box = detail::parse_box(c["box"], cfg.constants, where + ".box");
      if (c.contains("successor")) {
        require(c["successor"].is_number_integer(), where + ".successor must be an integer");
        cell.successor = c["successor"].get<int>();
      }
      return cell;
    };
    int k = 0;
    for (const auto& c : cv["cells"]) spec.cells.push_back(parse_cell(c, "cover.cells[" + std::to_string(k++) + "]"));
    if (cv.contains("end") && !cv["end"].is_null()) spec.end = parse_cell(cv["end"], "cover.end");
    cfg.cover = std::move(spec);
  }

  cfg.numerics = detail::parse_numerics(j.contains("numerics") ? j["numerics"] : nlohmann::json());

  if (j.contains("lagrangian")) {
    require(j["lagrangian"].is_object(), "lagrangian: expected an object keyed by chart");
    for (const auto& [name, v] : j["lagrangian"].items()) {
      const Chart* c = cfg.atlas.find_chart(name);
      require(c, "lagrangian references unknown chart " + name);
      require(v.is_string(), "lagrangian." + name + " must be a string");
      cfg.lagrangian_text[name] = v.get<std::string>();
      cfg.lagrangians[name] =
          detail::parse_field(v.get<std::string>(), chart_parse_options(*c, cfg.constants), "lagrangian." + name);
      try {
        jet_order(cfg.lagrangians[name]);
      } catch (const std::exception& e) {
        throw ConfigError("lagrangian." + name + ": " + e.what());
      }
    }
  }
  return cfg;
}

inline ProblemConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return load_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace globlag
