#include <gtest/gtest.h>

#include <cmath>

#include "globlag/config.hpp"
#include "globlag/globalize.hpp"
#include "problems.hpp"

using namespace globlag;

namespace {

struct Families {
  std::map<std::string, SourceField> eps;
  std::map<std::string, FormField> alpha_prime, kappa, omega;
};

Families families(const ProblemConfig& cfg) {
  Families f;
  for (const auto& ch : cfg.atlas.charts()) {
    GlobalizeOptions o;
    o.varcheck.ranges = cfg.numerics.ranges();
    o.lepage.ranges = cfg.numerics.ranges();
    ChartConstruction c = construct_chart(cfg.source_forms.at(ch.name), ch.domain, o);
    f.eps[ch.name] = to_source_field(c.eps);
    f.alpha_prime[ch.name] = to_field(c.split.alpha_prime);
    f.kappa[ch.name] = c.kappa;
    f.omega[ch.name] = to_field(c.omega);
  }
  return f;
}

void expect_global(const char* fixture) {
  ProblemConfig cfg = load_config_file(problems::fixture(fixture));
  Families f = families(cfg);
  const SampleRanges r = cfg.numerics.ranges();
  auto eps = check_global(cfg.atlas, f.eps, 1, 200, r);
  auto ap = check_global(cfg.atlas, f.alpha_prime, 1, 2, 200, r);
  auto ka = check_global(cfg.atlas, f.kappa, 1, 3, 200, r);
  auto om = check_global(cfg.atlas, f.omega, 0, 4, 200, r);
  const std::size_t n = cfg.atlas.transitions().size();
  for (const auto* rep : {&eps, &ap, &ka, &om}) EXPECT_EQ(rep->entries.size(), n) << fixture;
  EXPECT_LT(eps.max_mismatch(), 1e-8) << fixture;
  EXPECT_LT(ap.max_mismatch(), 1e-8) << fixture;
  EXPECT_LT(ka.max_mismatch(), 1e-8) << fixture;
  EXPECT_LT(om.max_mismatch(), 1e-8) << fixture;
}

}  // namespace

TEST(Atlas, FixtureAtlasesAreConsistent) {
  for (const char* name : {"mobius", "torus_constant", "torus_magnetic"}) {
    ProblemConfig cfg = load_config_file(problems::fixture(name));
    auto v = validate_atlas(cfg.atlas, 42);
    EXPECT_TRUE(v.ok) << name << ": " << (v.problems.empty() ? "" : v.problems.front());
    for (const auto& e : v.entries) {
      EXPECT_LT(e.max_roundtrip_error, 1e-12) << e.from << " -> " << e.to;
      EXPECT_NEAR(e.min_abs_jacobian, 1.0, 1e-15) << e.from << " -> " << e.to;
    }
  }
}

TEST(Atlas, MobiusSecondSheetReversesWidth) {
  ProblemConfig cfg = load_config_file(problems::fixture("mobius"));
  auto q = cfg.atlas.map_point("Vbar", "V", 4.0, 0.3);
  ASSERT_TRUE(q);
  EXPECT_NEAR((*q)[0], 4.0 - 2 * problems::kPi, 1e-15);
  EXPECT_EQ((*q)[1], -0.3);
  EXPECT_DOUBLE_EQ(cfg.atlas.jacobian_det("Vbar", "V", 4.0, 0.3), -1.0);
  EXPECT_DOUBLE_EQ(cfg.atlas.jacobian_det("Vbar", "V", 2.0, 0.3), 1.0);
  // Velocities follow the Jacobian: tau-dot changes sign on the second sheet.
  JetPoint p(2, 0.0, 4.0, 0.3, {0.5, 0.7, 0.1, 0.2});
  JetPoint m = cfg.atlas.transition("Vbar", "V")->apply(p);
  EXPECT_DOUBLE_EQ(m.at_slot(3), 0.5);
  EXPECT_DOUBLE_EQ(m.at_slot(4), -0.7);
  EXPECT_DOUBLE_EQ(m.at_slot(6), -0.2);
}

TEST(Atlas, GuardsMustCoverTheOverlap) {
  Atlas a;
  a.add_chart({"A", {"x", "y"}, {{-1, 1}, {-1, 1}}});
  a.add_chart({"B", {"x", "y"}, {{-1, 1}, {-1, 1}}});
  TransitionMap t{"A", "B", {{{parse("x")}, parse("x"), parse("y")}}, {{-1, 1}, {-1, 1}}};
  a.add_transition(t);
  a.add_transition({"B", "A", {{{}, parse("x"), parse("y")}}, {{-1, 1}, {-1, 1}}});
  auto v = validate_atlas(a, 1);
  EXPECT_FALSE(v.ok);
}

TEST(Atlas, BrokenInverseDetected) {
  Atlas a;
  a.add_chart({"A", {"x", "y"}, {{-1, 1}, {-1, 1}}});
  a.add_chart({"B", {"x", "y"}, {{-2, 2}, {-2, 2}}});
  a.add_transition({"A", "B", {{{}, parse("x"), parse("y")}}, {{-1, 1}, {-1, 1}}});
  a.add_transition({"B", "A", {{{}, parse("x/2"), parse("y")}}, {{-1, 1}, {-1, 1}}});
  auto v = validate_atlas(a, 1);
  EXPECT_FALSE(v.ok);
}

TEST(Globality, MobiusAtlas) { expect_global("mobius"); }

TEST(Globality, PuncturedTorusAtlas) { expect_global("torus_constant"); }

TEST(Globality, ChartDependentFormDetected) {
  // A Lagrangian-type quantity that is not invariant: eps = (xdd + x, ydd) with
  // x shifted by 2 pi between the torus charts.
  ProblemConfig cfg = load_config_file(problems::fixture("torus_constant"));
  std::map<std::string, SourceField> eps;
  for (const auto& c : cfg.atlas.charts()) eps[c.name] = to_source_field(problems::harmonic());
  auto rep = check_global(cfg.atlas, eps, 1, 50, problems::wide_ranges());
  EXPECT_GT(rep.max_mismatch(), 1.0);
}
