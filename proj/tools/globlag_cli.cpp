// globlag: decides whether a second-order system on a surface is variational
// and builds a global Lagrangian when it is.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "globlag/config.hpp"
#include "globlag/pipeline.hpp"

namespace {

int write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return 0;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "globlag: cannot write " << path << "\n";
    return globlag::kExitConfig;
  }
  f << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace globlag;
  CLI::App app{"Global Lagrangians for second-order systems on surfaces"};
  app.require_subcommand(1, 1);

  std::string config_path, out_path, report_path, method = "auto", grid, chart, lagrangian;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_symbolic, tol_quadrature, tol_cohomology, tol_globality, tol_omega, tol_obstruction,
      tol_mass;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "Problem file (JSON)")->required();
    c->add_option("--out", out_path, "Report path; CSV path for tabulate (default stdout)");
    c->add_option("--seed", seed, "Sampling seed");
    c->add_option("--tol-symbolic", tol_symbolic);
    c->add_option("--tol-quadrature", tol_quadrature);
    c->add_option("--tol-cohomology", tol_cohomology);
    c->add_option("--tol-globality", tol_globality);
    c->add_option("--tol-omega", tol_omega);
    c->add_option("--tol-obstruction", tol_obstruction);
    c->add_option("--tol-mass", tol_mass);
  };
  auto* check = app.add_subcommand("check", "Helmholtz conditions and globality of the source form");
  auto* build = app.add_subcommand("build", "Construct and verify a global Lagrangian");
  auto* verify = app.add_subcommand("verify", "Check given Lagrangians against the source form");
  auto* tabulate = app.add_subcommand("tabulate", "Build, then write the Lagrangian on a grid as CSV");
  for (auto* c : {check, build, verify, tabulate}) common(c);
  for (auto* c : {build, tabulate})
    c->add_option("--method", method, "auto | simple | cohomology | vainberg-tonti")
        ->check(CLI::IsMember({"auto", "simple", "cohomology", "vainberg-tonti"}));
  tabulate->add_option("--grid", grid, "var=lo:hi:n,... over t, x, y, xd, yd, xdd, ydd");
  tabulate->add_option("--chart", chart, "Chart to tabulate (default: first chart)");
  tabulate->add_option("--report", report_path, "Also write the JSON report here");
  verify->add_option("--lagrangian", lagrangian, "Lagrangian expression used in every chart");
  verify->add_option("--chart", chart, "Restrict verification to one chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  RunOptions opts;
  CLI::App* sub = app.get_subcommands().front();
  opts.command = *parse_command(sub->get_name());
  opts.method = *parse_method(method);
  if (!chart.empty()) opts.chart = chart;
  if (!lagrangian.empty()) opts.lagrangian = lagrangian;

  ProblemConfig cfg;
  try {
    cfg = load_config_file(config_path);
    opts.grid = parse_grid(grid);
  } catch (const std::exception& e) {
    Json r{{"command", sub->get_name()}, {"verdict", "error"}, {"error", e.what()}};
    std::cerr << "globlag: " << e.what() << "\n";
    const std::string& path = opts.command == Command::tabulate ? report_path : out_path;
    if (!path.empty()) write_text(path, r.dump(2) + "\n");
    return kExitConfig;
  }
  Numerics& n = cfg.numerics;
  if (seed) n.seed = *seed;
  for (auto [v, dst] : {std::pair{tol_symbolic, &n.tol_symbolic}, {tol_quadrature, &n.tol_quadrature},
                        {tol_cohomology, &n.tol_cohomology}, {tol_globality, &n.tol_globality},
                        {tol_omega, &n.tol_omega}, {tol_obstruction, &n.tol_obstruction}, {tol_mass, &n.tol_mass}})
    if (v) *dst = *v;

  RunResult r = run(cfg, opts);
  const std::string json = r.report.dump(2) + "\n";
  if (opts.command == Command::tabulate) {
    if (!report_path.empty() && write_text(report_path, json)) return kExitConfig;
    if (r.exit_code == kExitPass) {
      if (write_text(out_path, r.csv)) return kExitConfig;
    } else {
      std::cerr << json;
    }
  } else if (write_text(out_path, json)) {
    return kExitConfig;
  }
  if (r.exit_code == kExitConfig && r.report.contains("error"))
    std::cerr << "globlag: " << r.report["error"].get<std::string>() << "\n";
  return r.exit_code;
}
