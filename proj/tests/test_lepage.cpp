#include <gtest/gtest.h>

#include <cmath>

#include "globlag/lepage.hpp"
#include "globlag/varcheck.hpp"
#include "problems.hpp"

using namespace globlag;

namespace {

struct Case {
  const char* name;
  SourceForm eps;
  Box box;
  SampleRanges ranges;
};

std::vector<Case> passing_cases() {
  return {
      {"free", problems::free_particle(), Box{}, {}},
      {"harmonic", problems::harmonic(), Box{}, {}},
      {"mobius", problems::mobius(), problems::mobius_V(), {}},
      {"torus_constant", problems::torus_constant(), problems::torus_pi(), problems::wide_ranges()},
      {"torus_trig", problems::torus_trig(), problems::torus_pi(), problems::wide_ranges()},
  };
}

double sampled_max(const DifferentialForm& f, const Box& box, const SampleRanges& r, int order = 1) {
  FormField field = to_field(f);
  Sampler s(3);
  double m = 0.0;
  for (int i = 0; i < 200; ++i) m = std::max(m, field(s.jet(order, box, r)).max_abs());
  return m;
}

}  // namespace

TEST(Lepage, ProjectionRecoversSourceForm) {
  for (const auto& c : passing_cases()) {
    ABDecomposition ab = decompose(c.eps, c.box);
    LepageOptions lo;
    lo.positions = c.box;
    DifferentialForm alpha = lepage_equivalent(c.eps, ab, lo);
    auto p = p1(alpha);
    JetFunction ex(p[0] - c.eps.eps_x), ey(p[1] - c.eps.eps_y);
    Sampler s(9);
    for (int i = 0; i < 200; ++i) {
      JetPoint q = s.jet(2, c.box, c.ranges);
      EXPECT_LT(std::abs(ex(q)), 1e-12) << c.name;
      EXPECT_LT(std::abs(ey(q)), 1e-12) << c.name;
    }
  }
}

TEST(Lepage, ClosedAndSplitPartsClosed) {
  for (const auto& c : passing_cases()) {
    ABDecomposition ab = decompose(c.eps, c.box);
    LepageOptions lo;
    lo.positions = c.box;
    DifferentialForm alpha = lepage_equivalent(c.eps, ab, lo);
    AlphaDecomposition d = decompose_alpha(c.eps, ab);
    EXPECT_LT(sampled_max(exterior_derivative(alpha), c.box, c.ranges), 1e-10) << c.name;
    EXPECT_LT(sampled_max(exterior_derivative(d.alpha0), c.box, c.ranges), 1e-10) << c.name;
    EXPECT_LT(sampled_max(exterior_derivative(d.alpha_prime), c.box, c.ranges), 1e-10) << c.name;
    // alpha = alpha0 ^ dt + alpha'
    DifferentialForm rebuilt = wedge(d.alpha0, dt()) + d.alpha_prime;
    EXPECT_LT(sampled_max(alpha - rebuilt, c.box, c.ranges), 1e-12) << c.name;
  }
}

TEST(Lepage, FreeParticleCoefficients) {
  SourceForm e = problems::free_particle();
  ABDecomposition ab = decompose(e, {});
  AlphaDecomposition d = decompose_alpha(e, ab);
  // alpha0 = xd dxd + yd dyd, alpha' = dx^dxd + dy^dyd.
  JetPoint p(1, 0.3, 0.1, -0.2, {0.7, -1.1});
  FormValues a0 = to_field(d.alpha0)(p);
  EXPECT_DOUBLE_EQ(a0.c[bit(FormCoord::xd)], 0.7);
  EXPECT_DOUBLE_EQ(a0.c[bit(FormCoord::yd)], -1.1);
  EXPECT_EQ(a0.c[bit(FormCoord::x)], 0.0);
  FormValues ap = to_field(d.alpha_prime)(p);
  EXPECT_DOUBLE_EQ(ap.c[mask_of({FormCoord::x, FormCoord::xd})], 1.0);
  EXPECT_DOUBLE_EQ(ap.c[mask_of({FormCoord::y, FormCoord::yd})], 1.0);
  EXPECT_EQ(ap.c[mask_of({FormCoord::x, FormCoord::y})], 0.0);
}

TEST(Lepage, RejectsTimeDependentSplit) {
  SourceForm e(problems::P("xdd + t"), problems::P("ydd"), false);
  VarcheckOptions vo;
  ABDecomposition ab = decompose(e, {}, vo);
  EXPECT_THROW(decompose_alpha(e, ab), LepageError);
}

TEST(Lepage, NonVariationalFormGivesNonClosedForm) {
  // Accelerations still cancel, and p1 still recovers eps, but d(alpha) != 0.
  SourceForm e = problems::curl_only();
  ABDecomposition ab = decompose(e, {});
  DifferentialForm alpha = lepage_equivalent(e, ab);
  EXPECT_EQ(alpha.coefficient_order(), 1);
  auto p = p1(alpha);
  JetPoint q(2, 0.1, 0.2, 0.3, {0.4, 0.5, 0.6, 0.7});
  EXPECT_NEAR(JetFunction(p[0])(q), 0.5, 1e-15);
  EXPECT_GT(sampled_max(exterior_derivative(alpha), {}, {}), 0.1);
}
