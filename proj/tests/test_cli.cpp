#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "globlag/pipeline.hpp"
#include "problems.hpp"

using namespace globlag;

namespace {

RunResult run_fixture(const std::string& name, Command cmd, Method m = Method::automatic) {
  RunOptions o;
  o.command = cmd;
  o.method = m;
  return run(load_config_file(problems::fixture(name)), o);
}

// Every number finite, and every object carrying a verdict agrees with its
// residual and tolerance.
void expect_consistent(const Json& j, const std::string& where = "") {
  if (j.is_number()) {
    EXPECT_TRUE(std::isfinite(j.get<double>())) << where;
    return;
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    EXPECT_TRUE(s != "nan" && s != "inf" && s != "-inf") << where;
    return;
  }
  if (j.is_object()) {
    if (j.contains("pass") && j.contains("tolerance")) {
      const double tol = j["tolerance"].get<double>();
      const char* key = j.contains("max_residual") ? "max_residual" : "max_mismatch";
      if (j.contains(key)) EXPECT_EQ(j["pass"].get<bool>(), j[key].get<double>() < tol) << where;
    }
    for (const auto& [k, v] : j.items()) expect_consistent(v, where + "/" + k);
  }
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) expect_consistent(j[i], where + "/" + std::to_string(i));
}

void expect_contract(const RunResult& r) {
  expect_consistent(r.report);
  EXPECT_EQ(r.report["verdict"] == "pass", r.exit_code == kExitPass);
}

int shell(const std::string& cmd) {
  const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string kCli = GLOBLAG_CLI;

}  // namespace

TEST(Pipeline, CheckExitStatusOverFixtures) {
  const std::vector<std::pair<std::string, int>> expected = {
      {"free_particle", 0}, {"harmonic", 0}, {"mobius", 0}, {"torus_trig", 0}, {"torus_constant", 0},
      {"torus_magnetic", 0}, {"nonvariational", 1}, {"not_affine", 1}};
  for (const auto& [name, code] : expected) {
    auto r = run_fixture(name, Command::check);
    EXPECT_EQ(r.exit_code, code) << name;
    expect_contract(r);
  }
  EXPECT_EQ(run_fixture("nonvariational", Command::check).report["helmholtz"]["R2"]["failed_condition"], "A_cross");
  EXPECT_EQ(run_fixture("not_affine", Command::check).report["helmholtz"]["R2"]["failed_condition"],
            "affine_in_acceleration");
}

TEST(Pipeline, SimplePathBuilds) {
  for (const char* name : {"free_particle", "harmonic", "mobius", "torus_trig"}) {
    auto r = run_fixture(name, Command::build);
    EXPECT_EQ(r.exit_code, kExitPass) << name;
    EXPECT_EQ(r.report["construction"]["path"], "simple") << name;
    expect_contract(r);
    for (const auto& [chart, v] : r.report["verification"].items()) {
      EXPECT_EQ(v["samples"], 200) << name << " " << chart;
      EXPECT_LT(v["max_residual"].get<double>(), 1e-6) << name << " " << chart;
    }
  }
}

TEST(Pipeline, SimplePathRefusesNonzeroOmega) {
  auto r = run_fixture("torus_constant", Command::build, Method::simple);
  EXPECT_EQ(r.exit_code, kExitFail);
  EXPECT_TRUE(r.report["construction"].contains("error"));
  EXPECT_FALSE(r.report["omega"]["U_pp"]["zero"].get<bool>());
  expect_contract(r);
}

TEST(Pipeline, ObstructionIsReported) {
  auto r = run_fixture("torus_magnetic", Command::build);
  EXPECT_EQ(r.exit_code, kExitFail);
  EXPECT_EQ(r.report["construction"]["path"], "cohomology");
  const auto& ob = r.report["construction"]["obstruction"];
  EXPECT_NEAR(ob["c_last"].get<double>(), 4 * std::numbers::pi * std::numbers::pi, 1e-6);
  EXPECT_TRUE(ob["topological"].get<bool>());
  EXPECT_EQ(ob["masses"].size(), 16u);
  expect_contract(r);
}

TEST(Pipeline, VainbergTontiIsChartLocal) {
  auto r = run_fixture("harmonic", Command::build, Method::vainberg_tonti);
  EXPECT_EQ(r.exit_code, kExitPass);
  EXPECT_EQ(r.report["construction"]["path"], "vainberg-tonti-local");
  EXPECT_FALSE(r.report["globality"].contains("lagrangian"));
  expect_contract(r);
}

TEST(Pipeline, VerifyGivenLagrangians) {
  auto ok = run_fixture("mobius", Command::verify);
  EXPECT_EQ(ok.exit_code, kExitPass);
  expect_contract(ok);

  RunOptions o;
  o.command = Command::verify;
  o.lagrangian = "(xd^2 + yd^2)/2";  // sign of the kinetic term is wrong for eps = q'' + q
  auto bad = run(load_config_file(problems::fixture("harmonic")), o);
  EXPECT_EQ(bad.exit_code, kExitFail);
  expect_contract(bad);

  o.lagrangian = "-(xd^2 + yd^2)/2 + (x^2 + y^2)/2 + x*xd";  // plus a total derivative
  EXPECT_EQ(run(load_config_file(problems::fixture("harmonic")), o).exit_code, kExitPass);

  o.lagrangian = "xddd";
  EXPECT_EQ(run(load_config_file(problems::fixture("harmonic")), o).exit_code, kExitConfig);
}

TEST(Pipeline, ConfigErrorsExitTwo) {
  RunOptions o;
  o.command = Command::build;
  o.method = Method::cohomology;
  EXPECT_EQ(run(load_config_file(problems::fixture("mobius")), o).exit_code, kExitConfig);  // no cover
  o.method = Method::automatic;
  o.chart = "nowhere";
  auto r = run(load_config_file(problems::fixture("mobius")), o);
  EXPECT_EQ(r.exit_code, kExitConfig);
  EXPECT_EQ(r.report["verdict"], "error");
  o.chart.reset();
  o.command = Command::verify;
  EXPECT_EQ(run(load_config_file(problems::fixture("torus_trig")), o).exit_code, kExitConfig);  // nothing to verify
}

TEST(Pipeline, GridParsing) {
  auto g = parse_grid("x=-1:1:5,yd=0.5");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].variable, "x");
  EXPECT_EQ(g[0].count, 5);
  EXPECT_EQ(g[1].lo, 0.5);
  EXPECT_EQ(g[1].count, 1);
  EXPECT_THROW(parse_grid("q=1"), ConfigError);
  EXPECT_THROW(parse_grid("x=1:2"), ConfigError);
  EXPECT_THROW(parse_grid("x=1:2:0"), ConfigError);
  EXPECT_THROW(parse_grid("x=1,x=2"), ConfigError);
}

TEST(Pipeline, TabulateWritesGrid) {
  RunOptions o;
  o.command = Command::tabulate;
  o.grid = parse_grid("t=0:1:2,x=-1:1:3,y=0.5,xd=0:1:2,yd=-1");
  auto r = run(load_config_file(problems::fixture("mobius")), o);
  ASSERT_EQ(r.exit_code, kExitPass);
  std::istringstream in(r.csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "chart,t,x,y,xd,yd,xdd,ydd,L");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("V,", 0), 0u);
    std::vector<double> v;
    std::istringstream ls(line.substr(line.find(',') + 1));
    std::string cell;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 8u);
    EXPECT_TRUE(std::isfinite(v[7]));
    // mu0 is proportional to t and kappa vanishes with the velocity
    if (v[0] == 0.0 && v[3] == 0.0 && v[4] == 0.0) EXPECT_NEAR(v[7], 0.0, 1e-14);
  }
  EXPECT_EQ(rows, 12);
}

TEST(Cli, ExitStatusContract) {
  const std::string f = GLOBLAG_FIXTURE_DIR;
  EXPECT_EQ(shell(kCli + " check --config " + f + "/mobius.json"), 0);
  EXPECT_EQ(shell(kCli + " check --config " + f + "/nonvariational.json"), 1);
  EXPECT_EQ(shell(kCli + " check --config " + f + "/missing.json"), 2);
  EXPECT_EQ(shell(kCli + " check"), 2);
  EXPECT_EQ(shell(kCli + " build --config " + f + "/mobius.json --method nonsense"), 2);
  EXPECT_EQ(shell(kCli + " tabulate --config " + f + "/harmonic.json --grid q=1"), 2);
  // A tolerance below the achieved residual turns the verdict into a failure.
  EXPECT_EQ(shell(kCli + " build --config " + f + "/torus_trig.json --tol-quadrature 1e-12"), 1);
}

TEST(Cli, ReportsAreByteIdentical) {
  const std::string f = GLOBLAG_FIXTURE_DIR;
  const std::string dir = ::testing::TempDir();
  for (const char* name : {"mobius", "torus_trig"}) {
    const std::string a = dir + "/a.json", b = dir + "/b.json", c = dir + "/c.json";
    const std::string base = kCli + " build --config " + f + "/" + name + ".json --out ";
    ASSERT_EQ(shell(base + a), 0);
    ASSERT_EQ(shell(base + b), 0);
    ASSERT_EQ(shell(base + c + " --seed 7"), 0);
    const std::string ra = slurp(a);
    EXPECT_FALSE(ra.empty());
    EXPECT_EQ(ra, slurp(b)) << name;
    EXPECT_NE(ra, slurp(c)) << name;
    EXPECT_TRUE(Json::parse(ra).is_object());
  }
}
