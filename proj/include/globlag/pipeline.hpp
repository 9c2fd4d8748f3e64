#pragma once

// check -> construct -> verify orchestration and the JSON report.
//
// Exit status: 0 when every verdict passes, 1 on a mathematical failure
// (Helmholtz, globality, obstruction, verification), 2 on configuration errors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "globlag/atlas.hpp"
#include "globlag/cohomology.hpp"
#include "globlag/config.hpp"
#include "globlag/globalize.hpp"
#include "globlag/lagrange.hpp"
#include "globlag/lepage.hpp"
#include "globlag/varcheck.hpp"

namespace globlag {

using Json = nlohmann::ordered_json;

enum class Command { check, build, verify, tabulate };
enum class Method { automatic, simple, cohomology, vainberg_tonti };

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitConfig = 2;

inline std::optional<Command> parse_command(const std::string& s) {
  if (s == "check") return Command::check;
  if (s == "build") return Command::build;
  if (s == "verify") return Command::verify;
  if (s == "tabulate") return Command::tabulate;
  return std::nullopt;
}

inline std::optional<Method> parse_method(const std::string& s) {
  if (s == "auto") return Method::automatic;
  if (s == "simple") return Method::simple;
  if (s == "cohomology") return Method::cohomology;
  if (s == "vainberg-tonti") return Method::vainberg_tonti;
  return std::nullopt;
}

inline const char* command_name(Command c) {
  switch (c) {
    case Command::check: return "check";
    case Command::build: return "build";
    case Command::verify: return "verify";
    case Command::tabulate: return "tabulate";
  }
  return "?";
}

// One tabulation axis: `count` evenly spaced values in [lo, hi].
struct GridAxis {
  std::string variable;
  double lo = 0.0, hi = 0.0;
  int count = 1;
};

// "x=-1:1:5,y=0:2:3,xd=0.5" (a single value means count 1).
inline std::vector<GridAxis> parse_grid(const std::string& spec) {
  static const std::vector<std::string> allowed = {"t", "x", "y", "xd", "yd", "xdd", "ydd"};
  std::vector<GridAxis> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("grid entry '" + item + "' is not of the form var=lo:hi:n");
    GridAxis a;
    a.variable = item.substr(0, eq);
    if (std::find(allowed.begin(), allowed.end(), a.variable) == allowed.end())
      throw ConfigError("grid variable '" + a.variable + "' is not one of t, x, y, xd, yd, xdd, ydd");
    std::vector<std::string> parts;
    std::stringstream ps(item.substr(eq + 1));
    std::string p;
    while (std::getline(ps, p, ':')) parts.push_back(p);
    try {
      if (parts.size() == 1) {
        a.lo = a.hi = std::stod(parts[0]);
      } else if (parts.size() == 3) {
        a.lo = std::stod(parts[0]);
        a.hi = std::stod(parts[1]);
        a.count = std::stoi(parts[2]);
      } else {
        throw ConfigError("");
      }
    } catch (const std::exception&) {
      throw ConfigError("grid entry '" + item + "' is not of the form var=lo:hi:n or var=value");
    }
    if (a.count < 1 || a.count > 100000) throw ConfigError("grid entry '" + item + "': count must be in 1..100000");
    for (const auto& b : out)
      if (b.variable == a.variable) throw ConfigError("grid variable '" + a.variable + "' given twice");
    out.push_back(a);
  }
  return out;
}

struct RunOptions {
  Command command = Command::check;
  Method method = Method::automatic;
  std::optional<std::string> chart;             // tabulate and verify: restrict to one chart
  std::optional<std::string> lagrangian;        // verify: expression overriding the configured ones
  std::vector<GridAxis> grid;                   // tabulate
  int table_samples = 5;                        // lambda samples per chart in the build report
};

struct RunResult {
  Json report;
  int exit_code = kExitPass;
  std::string csv;  // tabulate only
};

namespace detail {

// Non-finite numbers become strings so that the report stays valid JSON with
// finite numeric entries.
inline Json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json jet_json(const JetPoint& p) {
  Json j;
  for (int i = 0; i < 3 + 2 * p.order(); ++i) j[std::string(kJetVariables[i])] = num(p.values()[i]);
  return j;
}

inline Json condition_json(const ConditionResidual& c) {
  Json j;
  j["name"] = c.name;
  j["max_residual"] = num(c.max_residual);
  j["pass"] = c.pass;
  if (c.worst) j["worst"] = jet_json(*c.worst);
  return j;
}

inline Json globality_json(const GlobalityReport& r, double tol) {
  Json j;
  j["tolerance"] = tol;
  j["max_mismatch"] = num(r.max_mismatch());
  j["pass"] = r.pass(tol);
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json x;
    x["from"] = e.from;
    x["to"] = e.to;
    x["samples"] = e.samples;
    x["max_mismatch"] = num(e.max_mismatch);
    if (e.worst) x["worst"] = jet_json(*e.worst);
    entries.push_back(x);
  }
  j["overlaps"] = entries;
  return j;
}

inline Json box_json(const Box& b) {
  return Json{{"x", {num(b.x.lo), num(b.x.hi)}}, {"y", {num(b.y.lo), num(b.y.hi)}}};
}

inline VarcheckOptions varcheck_options(const Numerics& n) {
  VarcheckOptions o;
  o.tol = n.tol_symbolic;
  o.samples = n.samples;
  o.seed = n.seed;
  o.ranges = n.ranges();
  return o;
}

inline GlobalizeOptions globalize_options(const Numerics& n) {
  GlobalizeOptions o;
  o.varcheck = varcheck_options(n);
  o.lepage.seed = n.seed;
  o.lepage.ranges = n.ranges();
  o.quad.order = n.quadrature_order;
  o.omega_tol = n.tol_omega;
  o.omega_samples = n.samples;
  return o;
}

inline FiniteDifferenceOptions fd_options(const Numerics& n) { return {n.fd_step_first, n.fd_step_nested}; }

inline CohomologyOptions cohomology_options(const Numerics& n) {
  CohomologyOptions o;
  o.order = n.cohomology_order;
  o.min_panels = n.cohomology_min_panels;
  o.tol_mass = n.tol_mass;
  o.tol_obstruction = n.tol_obstruction;
  return o;
}

// Chart-local seeds so that reports do not depend on the chart order.
inline std::uint64_t chart_seed(std::uint64_t seed, const std::string& chart) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : chart) h = (h ^ c) * 1099511628211ull;
  return seed ^ h;
}

// Second-jet points of a chart at least `margin` inside its domain, and inside
// the covered region when a cover is given.
inline std::function<bool(const JetPoint&)> accept_predicate(const Chart& chart, double margin,
                                                             std::shared_ptr<const CoveredSurface> surface) {
  return [d = chart.domain, name = chart.name, margin, surface](const JetPoint& p) {
    const double x = p.x(), y = p.y();
    if (!(x > d.x.lo + margin && x < d.x.hi - margin && y > d.y.lo + margin && y < d.y.hi - margin)) return false;
    if (!surface) return true;
    for (double dx : {-margin, 0.0, margin})
      for (double dy : {-margin, 0.0, margin})
        if (!surface->covered(name, x + dx, y + dy)) return false;
    return true;
  };
}

inline Json verification_json(const Verification& v, double tol) {
  Json j;
  j["tolerance"] = tol;
  j["samples"] = v.samples;
  j["max_residual"] = num(v.max_residual);
  j["pass"] = v.pass;
  if (v.worst) j["worst"] = jet_json(*v.worst);
  return j;
}

}  // namespace detail

class Pipeline {
 public:
  Pipeline(ProblemConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {}

  RunResult run() {
    RunResult r;
    Json& rep = r.report;
    rep["problem"] = cfg_.name;
    rep["command"] = command_name(opts_.command);
    rep["numerics"] = numerics_json();
    if (opts_.chart && !cfg_.atlas.find_chart(*opts_.chart)) throw ConfigError("unknown chart " + *opts_.chart);

    bool ok = check(rep);
    if (opts_.command == Command::check || !ok) {
      finish(r, ok);
      return r;
    }
    if (opts_.command == Command::verify) {
      finish(r, verify_given(rep));
      return r;
    }
    ok = build(rep);
    if (ok && opts_.command == Command::tabulate) r.csv = tabulate();
    finish(r, ok);
    return r;
  }

 private:
  struct ChartResult {
    ChartConstruction construction;
    CompositeLagrangian lambda;
  };

  void finish(RunResult& r, bool ok) const {
    r.report["verdict"] = ok ? "pass" : "fail";
    r.exit_code = ok ? kExitPass : kExitFail;
  }

  Json numerics_json() const {
    const Numerics& n = cfg_.numerics;
    return Json{{"tol_symbolic", n.tol_symbolic},       {"tol_quadrature", n.tol_quadrature},
                {"tol_cohomology", n.tol_cohomology},   {"tol_globality", n.tol_globality},
                {"tol_omega", n.tol_omega},             {"tol_obstruction", n.tol_obstruction},
                {"tol_mass", n.tol_mass},               {"samples", n.samples},
                {"verify_samples", n.verify_samples},   {"seed", n.seed},
                {"quadrature_order", n.quadrature_order}, {"cohomology_order", n.cohomology_order},
                {"cohomology_min_panels", n.cohomology_min_panels}, {"fd_step_first", n.fd_step_first},
                {"fd_step_nested", n.fd_step_nested}, {"fd_step_nested_eta", n.fd_step_nested_eta},
                {"chart_margin", n.chart_margin}};
  }

  // Helmholtz conditions per chart and globality of eps.
  bool check(Json& rep) {
    const Numerics& n = cfg_.numerics;
    bool ok = true;
    Json h;
    for (const auto& c : cfg_.atlas.charts()) {
      VarcheckOptions vo = detail::varcheck_options(n);
      vo.seed = detail::chart_seed(n.seed, c.name);
      vo.allow_time_dependence = !cfg_.flags.time_independent;
      HelmholtzReport hr = helmholtz(cfg_.source_forms.at(c.name), c.domain, vo);
      Json j;
      j["pass"] = hr.pass;
      if (hr.failed_condition) j["failed_condition"] = *hr.failed_condition;
      j["conditions"] = Json::array();
      for (const auto& x : hr.conditions) j["conditions"].push_back(detail::condition_json(x));
      j["second_jet_cross_check"] = Json::array();
      for (const auto& x : hr.raw_conditions) j["second_jet_cross_check"].push_back(detail::condition_json(x));
      j["cross_check_agrees"] = hr.cross_check_agrees;
      j["third_order_dependence"] = detail::num(hr.third_order_dependence);
      j["warnings"] = hr.warnings;
      h[c.name] = j;
      ok = ok && hr.pass;
    }
    rep["helmholtz"] = h;

    std::map<std::string, SourceField> eps;
    for (const auto& [name, e] : cfg_.source_forms) eps[name] = to_source_field(e);
    auto g = check_global(cfg_.atlas, eps, n.seed, n.samples, n.ranges());
    rep["globality"]["source_form"] = detail::globality_json(g, n.tol_globality);
    return ok && g.pass(n.tol_globality);
  }

  bool build(Json& rep) {
    const Numerics& n = cfg_.numerics;
    GlobalizeOptions go = detail::globalize_options(n);
    Json& cons = rep["construction"];
    bool ok = true;

    std::map<std::string, ChartConstruction> cc;
    std::map<std::string, FormField> ap, ka, om;
    Json omega_json, identities;
    bool omega_zero = true;
    for (const auto& c : cfg_.atlas.charts()) {
      GlobalizeOptions o = go;
      o.varcheck.seed = detail::chart_seed(n.seed, c.name);
      ChartConstruction k = construct_chart(cfg_.source_forms.at(c.name), c.domain, o);
      OmegaStatus s = omega_status(k.omega, c.domain, n.samples, o.varcheck.seed + 5, n.tol_omega, n.ranges());
      omega_zero = omega_zero && s.zero;
      Json w;
      w["zero"] = s.zero;
      w["symbolic_zero"] = s.symbolic_zero;
      w["samples"] = s.samples;
      w["max_abs"] = detail::num(s.max_abs);
      w["coefficient"] = omega_coefficient(k.omega).str();
      if (s.worst) w["worst"] = detail::jet_json(*s.worst);
      omega_json[c.name] = w;

      const std::uint64_t sd = o.varcheck.seed;
      Json id;
      id["d_mu0_minus_alpha0_dt"] = detail::num(mu0_residual(k, n.samples, sd + 11, n.ranges()));
      id["h_mu0_plus_t_eps_v"] = detail::num(horizontal_mu0_residual(k, n.samples, sd + 12, n.ranges()));
      id["alpha_prime_minus_omega_minus_d_kappa"] = detail::num(keq_residual(k, n.samples, sd + 13, n.ranges()));
      identities[c.name] = id;

      ap[c.name] = to_field(k.split.alpha_prime);
      ka[c.name] = k.kappa;
      om[c.name] = to_field(k.omega);
      cc.emplace(c.name, std::move(k));
    }
    rep["omega"] = omega_json;
    rep["identities"] = identities;

    auto gap = check_global(cfg_.atlas, ap, 1, n.seed + 1, n.samples, n.ranges());
    auto gka = check_global(cfg_.atlas, ka, 1, n.seed + 2, n.samples, n.ranges());
    auto gom = check_global(cfg_.atlas, om, 0, n.seed + 3, n.samples, n.ranges());
    rep["globality"]["alpha_prime"] = detail::globality_json(gap, n.tol_globality);
    rep["globality"]["kappa"] = detail::globality_json(gka, n.tol_globality);
    rep["globality"]["omega"] = detail::globality_json(gom, n.tol_globality);
    ok = gap.pass(n.tol_globality) && gka.pass(n.tol_globality) && gom.pass(n.tol_globality);

    Method m = opts_.method;
    if (m == Method::automatic) m = omega_zero ? Method::simple : Method::cohomology;

    std::shared_ptr<const CoveredSurface> surface;
    std::optional<ExactnessSolution> eta;
    double tol = n.tol_quadrature;
    EulerLagrangeOptions el;
    el.seed = n.seed;
    el.ranges = n.ranges();
    lambdas_.clear();

    switch (m) {
      case Method::simple: {
        cons["path"] = "simple";
        if (!omega_zero) {
          cons["error"] = "omega does not vanish; the simple path needs omega = 0";
          return false;
        }
        for (auto& [name, k] : cc) lambdas_.emplace(name, assemble_lagrangian(k, {}, el));
        break;
      }
      case Method::cohomology: {
        cons["path"] = "cohomology";
        tol = n.tol_cohomology;
        if (!cfg_.cover) throw ConfigError("the cohomology path needs a cover section");
        OmegaFamily w;
        for (auto& [name, k] : cc) w[name] = omega_position_field(k.omega);
        surface = std::make_shared<const CoveredSurface>(cfg_.atlas, *cfg_.cover, detail::cohomology_options(n));
        try {
          eta.emplace(solve_exactness(surface, w));
        } catch (const Obstruction& o) {
          Json ob;
          ob["message"] = o.what();
          ob["c_last"] = detail::num(o.c_last());
          ob["enlarged_c_last"] = detail::num(o.enlarged_c_last());
          ob["topological"] = o.topological();
          ob["masses"] = Json::array();
          for (double c : o.masses()) ob["masses"].push_back(detail::num(c));
          cons["obstruction"] = ob;
          return false;
        }
        cons["cells"] = cells_json(*eta);
        cons["c_last"] = detail::num(eta->c_last());
        ExactnessCheck chk = check_exactness(*eta, w, n.samples, n.seed + 7, 1e-4, n.position_limit);
        Json ex;
        ex["samples"] = chk.samples;
        ex["max_residual"] = detail::num(chk.max_residual);
        ex["partition_error"] = detail::num(chk.partition_error);
        ex["boundary_max"] = detail::num(chk.boundary_max);
        ex["tolerance"] = n.tol_cohomology;
        const bool ex_ok = chk.max_residual < n.tol_cohomology && chk.partition_error < 1e-12 &&
                           chk.boundary_max < 1e-8 && chk.samples > 0;
        ex["pass"] = ex_ok;
        if (!chk.worst_chart.empty()) ex["worst"] = {{"chart", chk.worst_chart}, {"x", chk.worst[0]}, {"y", chk.worst[1]}};
        cons["exactness"] = ex;
        ok = ok && ex_ok;
        for (auto& [name, k] : cc) lambdas_.emplace(name, assemble_lagrangian(k, eta->eta_field(name), el));
        break;
      }
      case Method::vainberg_tonti: {
        cons["path"] = "vainberg-tonti-local";
        cons["note"] = "chart-local Lagrangians; no global claim";
        for (auto& [name, k] : cc) {
          QuadratureOptions q;
          q.order = n.quadrature_order;
          try {
            auto vt = vainberg_tonti(k.ab, cfg_.chart(name).domain, q, 20, n.seed, n.ranges());
            cons["certification"][name] = detail::num(vt.certification_residual);
            CompositeLagrangian l;
            l.add_numeric(vt.reduced);
            lambdas_.emplace(name, std::move(l));
          } catch (const LagrangeError& e) {
            cons["error"][name] = e.what();
            ok = false;
          }
        }
        break;
      }
      case Method::automatic: break;
    }

    if (!lambdas_.empty()) {
      Json sym;
      for (auto& [name, k] : cc)
        if (m != Method::vainberg_tonti) sym[name] = horizontalize(k.mu0).L.str();
      if (m != Method::vainberg_tonti) {
        cons["symbolic_part"] = sym;
        cons["numeric_parts"] = m == Method::cohomology ? Json{"h(kappa)", "h(eta)"} : Json{"h(kappa)"};
      }
      ok = verify_built(rep, tol, surface) && ok;
      if (m != Method::vainberg_tonti) {
        std::map<std::string, ScalarField> values;
        for (const auto& [name, l] : lambdas_) values[name] = [&l](const JetPoint& p) { return l.value(p); };
        auto g = check_global_scalar(cfg_.atlas, values, 2, n.seed + 9, std::min(n.samples, 50), n.ranges());
        const double gt = surface ? n.tol_cohomology : n.tol_globality;
        rep["globality"]["lagrangian"] = detail::globality_json(g, gt);
        ok = ok && g.pass(gt);
      }
      rep["lagrangian_samples"] = samples_json(surface);
    }
    surface_ = surface;
    return ok;
  }

  Json cells_json(const ExactnessSolution& s) const {
    Json a = Json::array();
    for (const auto& c : s.cells()) {
      Json j;
      j["index"] = c.index;
      j["chart"] = c.chart;
      j["box"] = detail::box_json(c.box);
      j["successor"] = c.successor == CoveredSurface::kEnd ? Json("end")
                       : c.successor >= s.surface().size() ? Json(nullptr)
                                                           : Json(c.successor);
      if (c.theta_box) j["theta_box"] = detail::box_json(*c.theta_box);
      j["incoming"] = detail::num(c.incoming);
      j["c"] = detail::num(c.mass);
      j["residual_mass"] = detail::num(c.residual_mass);
      j["nodes"] = c.nodes;
      a.push_back(j);
    }
    return a;
  }

  bool verify_built(Json& rep, double tol, const std::shared_ptr<const CoveredSurface>& surface) {
    const Numerics& n = cfg_.numerics;
    FiniteDifferenceOptions fd = detail::fd_options(n);
    if (surface) fd.step_nested = n.fd_step_nested_eta;
    bool ok = true;
    Json v;
    for (const auto& c : cfg_.atlas.charts()) {
      const auto& l = lambdas_.at(c.name);
      auto res = verify_lagrangian(l, to_source_field(cfg_.source_forms.at(c.name)), c.domain, n.verify_samples,
                                   detail::chart_seed(n.seed, c.name) + 21, tol, n.ranges(), fd,
                                   detail::accept_predicate(c, n.chart_margin, surface));
      v[c.name] = detail::verification_json(res, tol);
      ok = ok && res.pass;
    }
    rep["verification"] = v;
    return ok;
  }

  Json samples_json(const std::shared_ptr<const CoveredSurface>& surface) const {
    const Numerics& n = cfg_.numerics;
    Json out;
    for (const auto& c : cfg_.atlas.charts()) {
      Sampler s(detail::chart_seed(n.seed, c.name) + 31);
      auto accept = detail::accept_predicate(c, n.chart_margin, surface);
      Json rows = Json::array();
      int attempts = 0;
      while (static_cast<int>(rows.size()) < opts_.table_samples && attempts++ < 1000) {
        JetPoint p = s.jet(2, c.domain, n.ranges());
        if (!accept(p)) continue;
        Json row = detail::jet_json(p);
        row["L"] = detail::num(lambdas_.at(c.name).value(p));
        rows.push_back(row);
      }
      out[c.name] = rows;
    }
    return out;
  }

  // Lagrangians given in the configuration (or on the command line) checked
  // against eps with exact Euler-Lagrange expressions.
  bool verify_given(Json& rep) {
    const Numerics& n = cfg_.numerics;
    std::map<std::string, Expression> given = cfg_.lagrangians;
    if (opts_.lagrangian) {
      given.clear();
      for (const auto& c : cfg_.atlas.charts()) {
        if (opts_.chart && c.name != *opts_.chart) continue;
        try {
          given[c.name] = parse(*opts_.lagrangian, chart_parse_options(c, cfg_.constants));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("lagrangian: ") + e.what());
        }
      }
    }
    if (given.empty()) throw ConfigError("verify needs a lagrangian section or --lagrangian");
    bool ok = true;
    Json v;
    for (const auto& [name, L] : given) {
      if (opts_.chart && name != *opts_.chart) continue;
      const Chart& c = cfg_.chart(name);
      const int order = jet_order(L) <= 1 ? 1 : 2;
      if (jet_order(L) > 2) throw ConfigError("lagrangian for chart " + name + " depends on third derivatives");
      EulerLagrangeOptions el;
      el.seed = n.seed;
      el.positions = c.domain;
      el.ranges = n.ranges();
      Json j;
      j["expression"] = L.str();
      try {
        CompositeLagrangian l(Lagrangian(order, L), el);
        auto res = verify_lagrangian(l, to_source_field(cfg_.source_forms.at(name)), c.domain, n.verify_samples,
                                     detail::chart_seed(n.seed, name) + 41, n.tol_symbolic, n.ranges(), {},
                                     detail::accept_predicate(c, n.chart_margin, nullptr));
        j.update(detail::verification_json(res, n.tol_symbolic));
        ok = ok && res.pass;
      } catch (const HigherOrderResidue& e) {
        j["error"] = e.what();
        j["pass"] = false;
        ok = false;
      }
      v[name] = j;
    }
    rep["verification"] = v;
    return ok;
  }

  std::string tabulate() const {
    const Numerics& n = cfg_.numerics;
    const std::string chart = opts_.chart.value_or(cfg_.atlas.charts().front().name);
    const Chart& c = cfg_.chart(chart);
    static const std::vector<std::string> vars = {"t", "x", "y", "xd", "yd", "xdd", "ydd"};
    std::vector<GridAxis> axes;
    for (const auto& v : vars) {
      auto it = std::find_if(opts_.grid.begin(), opts_.grid.end(), [&](const GridAxis& a) { return a.variable == v; });
      axes.push_back(it != opts_.grid.end() ? *it : GridAxis{v, 0.0, 0.0, 1});
    }
    auto accept = detail::accept_predicate(c, n.chart_margin, surface_);
    const auto& l = lambdas_.at(chart);
    std::ostringstream out;
    out.precision(17);
    out << "chart,t,x,y,xd,yd,xdd,ydd,L\n";
    std::vector<int> idx(axes.size(), 0);
    while (true) {
      double v[7];
      for (std::size_t k = 0; k < axes.size(); ++k) {
        const auto& a = axes[k];
        v[k] = a.count == 1 ? a.lo : a.lo + (a.hi - a.lo) * idx[k] / (a.count - 1);
      }
      JetPoint p(2, v[0], v[1], v[2], {v[3], v[4], v[5], v[6]});
      if (accept(p)) {
        out << chart;
        for (double x : v) out << ',' << x;
        out << ',' << l.value(p) << '\n';
      }
      std::size_t k = 0;
      while (k < axes.size() && ++idx[k] == axes[k].count) idx[k++] = 0;
      if (k == axes.size()) break;
    }
    return out.str();
  }

  ProblemConfig cfg_;
  RunOptions opts_;
  std::map<std::string, CompositeLagrangian> lambdas_;
  std::shared_ptr<const CoveredSurface> surface_;
};

// Runs a command; configuration problems raised while running become exit
// status 2 with an error report.
inline RunResult run(const ProblemConfig& cfg, const RunOptions& opts) {
  try {
    return Pipeline(cfg, opts).run();
  } catch (const ConfigError& e) {
    RunResult r;
    r.report["problem"] = cfg.name;
    r.report["command"] = command_name(opts.command);
    r.report["verdict"] = "error";
    r.report["error"] = e.what();
    r.exit_code = kExitConfig;
    return r;
  } catch (const CohomologyError& e) {
    // Inadmissible covers are configuration errors; obstructions are caught earlier.
    RunResult r;
    r.report["problem"] = cfg.name;
    r.report["command"] = command_name(opts.command);
    r.report["verdict"] = "error";
    r.report["error"] = e.what();
    r.exit_code = kExitConfig;
    return r;
  }
}

}  // namespace globlag
