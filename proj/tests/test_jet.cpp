#include <gtest/gtest.h>

#include <random>

#include "globlag/jet.hpp"
#include "globlag/sampling.hpp"

using namespace globlag;

namespace {

Expression J(const char* s) { return parse(s); }

double at(const Expression& e, const JetPoint& p) { return JetFunction(e)(p); }

// Random polynomial in (t, x, y, xd, yd) of total degree <= 3.
Expression random_polynomial(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coef(-1, 1);
  std::uniform_int_distribution<int> var(0, 4), count(1, 4), deg(0, 3);
  Expression out(0.0);
  int terms = count(rng);
  for (int i = 0; i < terms; ++i) {
    Expression m(coef(rng));
    int d = deg(rng);
    for (int k = 0; k < d; ++k) m = m * jet_var(kFormCoordNames[var(rng)]);
    out = out + m;
  }
  return out;
}

DifferentialForm random_one_form(std::mt19937_64& rng) {
  DifferentialForm f(1, kAllCoords);
  for (int c = 0; c < kFormCoords; ++c) f.set(static_cast<BasisMask>(1u << c), random_polynomial(rng));
  return f;
}

}  // namespace

TEST(JetPoint, OrderIsEnforced) {
  JetPoint p(1, 0.0, 1.0, 2.0, {3.0, 4.0});
  EXPECT_EQ(p["xd"], 3.0);
  EXPECT_EQ(p.derivative(1, 1), 4.0);
  EXPECT_THROW(p["xdd"], std::out_of_range);
  EXPECT_THROW(p.derivative(2, 0), std::out_of_range);
  EXPECT_THROW(JetPoint(1, 0, 0, 0, {1.0}), std::invalid_argument);
  EXPECT_THROW(JetPoint(0, 0, NAN, 0), std::invalid_argument);
  EXPECT_THROW(JetFunction(J("xdd"))(p), std::out_of_range);
}

TEST(TotalDerivative, Examples) {
  Expression a = total_derivative(J("x"));
  ASSERT_EQ(a.op(), Op::kVar);
  EXPECT_EQ(a.var_name(), "xd");

  JetPoint p(2, 1.5, 0.2, -0.3, {0.7, -1.1, 0.4, 2.0});
  EXPECT_DOUBLE_EQ(at(total_derivative(J("xd^2/2")), p), 0.7 * 0.4);
  EXPECT_DOUBLE_EQ(at(total_derivative(J("t*xd")), p), 0.7 + 1.5 * 0.4);
  EXPECT_THROW(total_derivative(J("xdddd")), std::invalid_argument);
}

TEST(TotalDerivative, AgreesWithCurveDerivative) {
  // Along the curve x(t) = sin t, y(t) = t^2 the total derivative is d/dt.
  Expression f = J("x*yd + xd^2*y + t*x");
  Expression df = total_derivative(f);
  auto jet_at = [](double t) {
    return JetPoint(2, t, std::sin(t), t * t, {std::cos(t), 2 * t, -std::sin(t), 2.0});
  };
  const double t = 0.7, h = 1e-5;
  double fd = (at(f, jet_at(t + h)) - at(f, jet_at(t - h))) / (2 * h);
  EXPECT_NEAR(at(df, jet_at(t)), fd, 1e-8);
}

TEST(Forms, WedgeSignsAndNilpotency) {
  DifferentialForm a = wedge(dx(), dt());
  EXPECT_DOUBLE_EQ(a.coefficient(mask_of({FormCoord::t, FormCoord::x})).constant_value(), -1.0);
  EXPECT_TRUE(wedge(dx(), dx()).terms().empty());
  DifferentialForm b = wedge(wedge(dyd(), dx()), dt());
  EXPECT_DOUBLE_EQ(b.coefficient(mask_of({FormCoord::t, FormCoord::x, FormCoord::yd})).constant_value(), -1.0);
}

TEST(Forms, DegreeTwoHasAtMostTenCoefficients) {
  std::mt19937_64 rng(5);
  DifferentialForm w = wedge(random_one_form(rng), random_one_form(rng));
  EXPECT_LE(w.terms().size(), 10u);
  for (const auto& [m, e] : w.terms()) EXPECT_EQ(std::popcount(static_cast<unsigned>(m)), 2);
}

TEST(Forms, ExteriorDerivativeExamples) {
  DifferentialForm d1 = exterior_derivative(jet_var("x") * dy());
  ASSERT_EQ(d1.terms().size(), 1u);
  EXPECT_DOUBLE_EQ(d1.coefficient(mask_of({FormCoord::x, FormCoord::y})).constant_value(), 1.0);

  DifferentialForm top = J("sin(x)*y^2") * wedge(dx(), dy());
  DifferentialForm d2 = exterior_derivative(top);
  EXPECT_TRUE(d2.terms().empty());

  EXPECT_THROW(exterior_derivative(jet_var("xdd") * dx()), std::invalid_argument);
}

TEST(Forms, DSquaredVanishes) {
  std::mt19937_64 rng(2024);
  Sampler s(1);
  for (int n = 0; n < 50; ++n) {
    DifferentialForm rho = random_one_form(rng);
    DifferentialForm dd = exterior_derivative(exterior_derivative(rho));
    for (int k = 0; k < 20; ++k) {
      JetPoint p = s.jet(1, Box{});
      EXPECT_LT(dd.evaluate(p).max_abs(), 1e-12);
    }
  }
}

TEST(Forms, FiniteDifferenceDerivativeMatchesSymbolic) {
  std::mt19937_64 rng(9);
  Sampler s(2);
  for (int n = 0; n < 10; ++n) {
    DifferentialForm rho = random_one_form(rng);
    FormField exact = to_field(exterior_derivative(rho));
    FormField fd = exterior_derivative_fd(to_field(rho), kAllCoords, 1e-3);
    for (int k = 0; k < 5; ++k) {
      JetPoint p = s.jet(1, Box{});
      EXPECT_LT((exact(p) - fd(p)).max_abs(), 1e-9);
    }
  }
}

TEST(Horizontalize, Examples) {
  Lagrangian a = horizontalize(dx());
  EXPECT_EQ(a.order, 1);
  EXPECT_EQ(a.L.var_name(), "xd");

  Lagrangian b = horizontalize(J("-xd") * dx() + J("-yd") * dy());
  JetPoint p(1, 0, 0, 0, {1.5, -0.5});
  EXPECT_DOUBLE_EQ(at(b.L, p), -(1.5 * 1.5 + 0.25));

  Lagrangian c = horizontalize(J("t") * dxd());
  EXPECT_EQ(c.order, 2);
}

TEST(Horizontalize, IdempotentOnLagrangians) {
  Expression L = J("xd^2 + x*y*yd");
  Lagrangian h = horizontalize(L * dt());
  Sampler s(3);
  for (int k = 0; k < 10; ++k) {
    JetPoint p = s.jet(1, Box{});
    EXPECT_EQ(at(h.L, p), at(L, p));
  }
}

TEST(ContactDecompose, Examples) {
  auto d = contact_decompose(dx());
  EXPECT_EQ(d.horizontal.L.var_name(), "xd");
  EXPECT_TRUE(d.A_x.is_one());
  EXPECT_TRUE(d.A_y.is_zero());

  auto e = contact_decompose(dt());
  EXPECT_TRUE(e.horizontal.L.is_one());
  EXPECT_TRUE(e.A_x.is_zero() && e.A_y.is_zero());
}

TEST(ContactDecompose, Reconstruction) {
  std::mt19937_64 rng(77);
  Sampler s(4);
  for (int n = 0; n < 20; ++n) {
    DifferentialForm rho = random_one_form(rng);
    DifferentialForm back = reassemble(contact_decompose(rho));
    for (int k = 0; k < 10; ++k) {
      JetPoint p = s.jet(2, Box{});
      EXPECT_LT((rho.evaluate(p) - back.evaluate(p)).max_abs(), 1e-12);
    }
  }
}

TEST(P1, TwoContactAndOneContactParts) {
  auto z = p1(wedge(contact_x(), contact_y()));
  JetPoint p(2, 0.3, 0.1, 0.2, {1.0, -2.0, 0.5, 0.7});
  EXPECT_NEAR(at(z[0], p), 0.0, 1e-15);
  EXPECT_NEAR(at(z[1], p), 0.0, 1e-15);

  // (A wx + B wy) ^ dt has one-contact part (A, B).
  DifferentialForm eps = wedge(J("x*yd") * contact_x() + J("xdd + y") * contact_y(), dt());
  auto e = p1(eps);
  EXPECT_DOUBLE_EQ(at(e[0], p), 0.1 * -2.0);
  EXPECT_DOUBLE_EQ(at(e[1], p), 0.5 + 0.2);
}
