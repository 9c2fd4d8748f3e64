#pragma once

// Euler-Lagrange operator, Cartan form, numeric Lagrangians with
// finite-difference Euler-Lagrange expressions, the Vainberg-Tonti Lagrangian
// with its first-order reduction, and equivalence of Lagrangians.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "globlag/expr.hpp"
#include "globlag/jet.hpp"
#include "globlag/quadrature.hpp"
#include "globlag/sampling.hpp"
#include "globlag/varcheck.hpp"

namespace globlag {

class HigherOrderResidue : public SampledFailure {
 public:
  using SampledFailure::SampledFailure;
};

class LagrangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EulerLagrangeOptions {
  std::uint64_t seed = 42;
  int samples = 20;
  double tol = 1e-10;
  Box positions;
  SampleRanges ranges;
};

// E_i = dL/dq_i - d_t dL/dqd_i (+ d_t^2 dL/dqdd_i for order 2). For order 2 the
// result is checked to be independent of third and fourth order coordinates,
// which are then set to zero.
inline SourceForm euler_lagrange(const Lagrangian& lambda, const EulerLagrangeOptions& opts = {}) {
  const Expression& L = lambda.L;
  std::array<Expression, 2> E;
  const char* q[2] = {"x", "y"};
  const char* qd[2] = {"xd", "yd"};
  const char* qdd[2] = {"xdd", "ydd"};
  for (int i = 0; i < 2; ++i) {
    E[i] = differentiate(L, q[i]) - total_derivative(differentiate(L, qd[i]));
    if (lambda.order == 2) E[i] = E[i] + total_derivative(total_derivative(differentiate(L, qdd[i])));
  }
  if (lambda.order == 2 || jet_order(E[0]) > 2 || jet_order(E[1]) > 2) {
    Sampler s(opts.seed);
    for (int i = 0; i < 2; ++i) {
      if (jet_order(E[i]) <= 2) continue;
      JetFunction f(E[i]);
      for (int n = 0; n < opts.samples; ++n) {
        JetPoint p = s.jet(4, opts.positions, opts.ranges);
        JetPoint r = p;
        for (int k = 3; k <= 4; ++k)
          for (int c = 0; c < 2; ++c)
            r = r.with_slot(jet_slot_of(k, c), s.uniform(-opts.ranges.higher, opts.ranges.higher));
        double a = f(p), b = f(r);
        double diff = std::abs(a - b);
        if (diff > opts.tol * std::max(1.0, std::abs(a)))
          throw HigherOrderResidue(std::string("Euler-Lagrange expression E_") + q[i] +
                                       " depends on jet coordinates above order 2",
                                   p, diff);
      }
    }
    Substitution zero;
    for (int slot = jet_slot_of(3, 0); slot < kJetSlots; ++slot)
      zero.emplace(std::string(kJetVariables[slot]), Expression(0.0));
    for (auto& e : E) e = substitute(e, zero);
  }
  bool autonomous = !E[0].depends_on("t") && !E[1].depends_on("t");
  return SourceForm(E[0], E[1], autonomous);
}

// Theta = L dt + L_xd (dx - xd dt) + L_yd (dy - yd dt).
inline DifferentialForm cartan(const Lagrangian& lambda) {
  if (lambda.order != 1) throw LagrangeError("the Cartan form is defined here for first-order Lagrangians");
  return lambda.L * dt() + differentiate(lambda.L, "xd") * contact_x() +
         differentiate(lambda.L, "yd") * contact_y();
}

// ---------------------------------------------------------------------------
// Numeric Lagrangians.

struct NumericLagrangian {
  int order = 1;
  std::function<double(const JetPoint&)> L;
};

struct FiniteDifferenceOptions {
  double step_first = 1e-5;   // plain partial derivatives
  double step_nested = 1e-3;  // both levels of d_t dL/dqd
};

namespace detail {

// Central difference with one Richardson step.
template <class F>
double richardson_derivative(F&& f, double h) {
  double d1 = (f(h) - f(-h)) / (2 * h);
  double d2 = (f(h / 2) - f(-h / 2)) / h;
  return (4 * d2 - d1) / 3;
}

inline JetPoint shift(const JetPoint& p, int slot, double h) { return p.with_slot(slot, p.at_slot(slot) + h); }

// Point moved by s along the total-derivative vector (1, xd, yd, xdd, ydd).
inline JetPoint flow(const JetPoint& p2, double s) {
  std::array<double, kJetSlots> v{};
  const auto& a = p2.values();
  v[0] = a[0] + s;
  v[1] = a[1] + s * a[3];
  v[2] = a[2] + s * a[4];
  v[3] = a[3] + s * a[5];
  v[4] = a[4] + s * a[6];
  return JetPoint::from_values(1, v);
}

}  // namespace detail

// Euler-Lagrange expressions of a first-order numeric Lagrangian at a point of
// order >= 2, by finite differences.
inline std::array<double, 2> euler_lagrange_fd(const NumericLagrangian& lambda, const JetPoint& p,
                                               const FiniteDifferenceOptions& fd = {}) {
  if (lambda.order != 1) throw LagrangeError("finite-difference Euler-Lagrange needs a first-order Lagrangian");
  if (p.order() < 2) throw LagrangeError("Euler-Lagrange expressions need a point of order >= 2");
  const JetPoint p1 = p.with_order(1);
  std::array<double, 2> out{};
  for (int c = 0; c < 2; ++c) {
    const int q = jet_slot_of(0, c), qd = jet_slot_of(1, c);
    double hq = fd.step_first * std::max(1.0, std::abs(p1.at_slot(q)));
    double dLdq = detail::richardson_derivative([&](double h) { return lambda.L(detail::shift(p1, q, h)); }, hq);
    auto momentum = [&](const JetPoint& at) {
      double hv = fd.step_nested * std::max(1.0, std::abs(at.at_slot(qd)));
      return detail::richardson_derivative([&](double h) { return lambda.L(detail::shift(at, qd, h)); }, hv);
    };
    double dt_momentum =
        detail::richardson_derivative([&](double s) { return momentum(detail::flow(p, s)); }, fd.step_nested);
    out[c] = dLdq - dt_momentum;
  }
  return out;
}

// Sum of one symbolic Lagrangian (exact Euler-Lagrange expressions) and any
// number of first-order numeric terms (finite differences).
class CompositeLagrangian {
 public:
  CompositeLagrangian() = default;
  explicit CompositeLagrangian(Lagrangian symbolic, const EulerLagrangeOptions& opts = {}) {
    set_symbolic(std::move(symbolic), opts);
  }

  void set_symbolic(Lagrangian symbolic, const EulerLagrangeOptions& opts = {}) {
    SourceForm e = euler_lagrange(symbolic, opts);
    symbolic_value_ = JetFunction(symbolic.L);
    symbolic_E_ = {JetFunction(e.eps_x), JetFunction(e.eps_y)};
    symbolic_ = std::move(symbolic);
  }

  void add_numeric(NumericLagrangian term) {
    if (term.order != 1) throw LagrangeError("numeric Lagrangian terms must be first order");
    numeric_.push_back(std::move(term));
  }

  const std::optional<Lagrangian>& symbolic() const { return symbolic_; }
  const std::vector<NumericLagrangian>& numeric() const { return numeric_; }
  int order() const { return symbolic_ ? symbolic_->order : 1; }

  double value(const JetPoint& p) const {
    double v = symbolic_ ? symbolic_value_(p) : 0.0;
    for (const auto& n : numeric_) v += n.L(p.order() > 1 ? p.with_order(1) : p);
    return v;
  }

  std::array<double, 2> euler_lagrange_at(const JetPoint& p, const FiniteDifferenceOptions& fd = {}) const {
    std::array<double, 2> e{};
    if (symbolic_) e = {symbolic_E_[0](p), symbolic_E_[1](p)};
    for (const auto& n : numeric_) {
      auto d = euler_lagrange_fd(n, p, fd);
      e[0] += d[0];
      e[1] += d[1];
    }
    return e;
  }

 private:
  std::optional<Lagrangian> symbolic_;
  JetFunction symbolic_value_;
  std::array<JetFunction, 2> symbolic_E_;
  std::vector<NumericLagrangian> numeric_;
};

struct Verification {
  double max_residual = 0.0;
  std::optional<JetPoint> worst;
  int samples = 0;
  bool pass = false;
};

// max |E(lambda) - eps| over sampled second-jet points.
inline Verification verify_lagrangian(const CompositeLagrangian& lambda, const SourceField& eps, const Box& positions,
                                      int samples, std::uint64_t seed, double tol, const SampleRanges& ranges = {},
                                      const FiniteDifferenceOptions& fd = {},
                                      const std::function<bool(const JetPoint&)>& accept = {}) {
  Verification v;
  Sampler s(seed);
  int attempts = 0;
  while (v.samples < samples) {
    if (++attempts > 100 * samples + 100) throw LagrangeError("could not draw verification samples");
    JetPoint p = s.jet(2, positions, ranges);
    if (accept && !accept(p)) continue;
    auto a = lambda.euler_lagrange_at(p, fd);
    auto b = eps(p);
    double r = std::max(std::abs(a[0] - b[0]), std::abs(a[1] - b[1]));
    if (std::isnan(r)) r = INFINITY;
    if (!v.worst || r > v.max_residual) {
      v.max_residual = r;
      v.worst = p;
    }
    ++v.samples;
  }
  v.pass = v.max_residual < tol;
  return v;
}

// Lagrangians are equivalent when their Euler-Lagrange expressions agree.
inline Verification equivalent(const CompositeLagrangian& a, const CompositeLagrangian& b, const Box& positions,
                               int samples, std::uint64_t seed, double tol, const SampleRanges& ranges = {},
                               const FiniteDifferenceOptions& fd = {}) {
  SourceField eb = [&b, fd](const JetPoint& p) { return b.euler_lagrange_at(p, fd); };
  return verify_lagrangian(a, eb, positions, samples, seed, tol, ranges, fd);
}

// ---------------------------------------------------------------------------
// Vainberg-Tonti Lagrangian.
//
//   L_T = x int_0^1 eps_x(s p) ds + y int_0^1 eps_y(s p) ds = L0 + P xdd + Q ydd,
//   G   = int_0^1 [P(x, y, u xd, u yd) xd + Q(x, y, u xd, u yd) yd] du,
//   L   = L_T - d_t G = L0 - G_x xd - G_y yd,
// using G_xd = P and G_yd = Q, which hold when dP/dyd = dQ/dxd.

class VainbergTonti {
 public:
  VainbergTonti(const ABDecomposition& ab, const Box& chart_domain, const QuadratureOptions& quad = {})
      : quad_(quad) {
    if (!(chart_domain.x.lo <= 0.0 && chart_domain.x.hi >= 0.0 && chart_domain.y.lo <= 0.0 &&
          chart_domain.y.hi >= 0.0))
      throw LagrangeError("chart domain " + to_string(chart_domain) +
                          " is not star-shaped about the origin of its coordinates");
    for (const auto& e : {ab.A_x, ab.A_y, ab.B_xx, ab.B_xy, ab.B_yy})
      if (e.depends_on("t")) throw LagrangeError("Vainberg-Tonti construction expects a time-independent source form");
    A_ = {JetFunction(ab.A_x), JetFunction(ab.A_y)};
    const Expression* B[3] = {&ab.B_xx, &ab.B_xy, &ab.B_yy};
    for (int i = 0; i < 3; ++i) {
      B_[i] = JetFunction(*B[i]);
      Bx_[i] = JetFunction(differentiate(*B[i], "x"));
      By_[i] = JetFunction(differentiate(*B[i], "y"));
    }
  }

  // Second-order Lagrangian L_T at a point of order >= 2.
  double second_order(const JetPoint& p) const {
    auto pq = PQ(p.x(), p.y(), p.at_slot(3), p.at_slot(4));
    return L0(p) + pq[0] * p.at_slot(5) + pq[1] * p.at_slot(6);
  }

  // Reduced first-order Lagrangian.
  double reduced(const JetPoint& p) const {
    const double x = p.x(), y = p.y(), xd = p.at_slot(3), yd = p.at_slot(4);
    auto g = integrate_vec<2>(
        [&](double u) {
          auto d = PQ_grad(x, y, u * xd, u * yd);
          return std::array<double, 2>{d[0] * xd + d[2] * yd, d[1] * xd + d[3] * yd};
        },
        0.0, 1.0, quad_);
    return L0(p) - g[0] * xd - g[1] * yd;
  }

  double G(double x, double y, double xd, double yd) const {
    return integrate(
        [&](double u) {
          auto pq = PQ(x, y, u * xd, u * yd);
          return pq[0] * xd + pq[1] * yd;
        },
        0.0, 1.0, quad_);
  }

  // (P, Q): acceleration coefficients of L_T.
  std::array<double, 2> PQ(double x, double y, double xd, double yd) const {
    return integrate_vec<2>(
        [&](double s) {
          double v[kJetSlots] = {0, s * x, s * y, s * xd, s * yd};
          double bxx = B_[0](v), bxy = B_[1](v), byy = B_[2](v);
          return std::array<double, 2>{s * (x * bxx + y * bxy), s * (x * bxy + y * byy)};
        },
        0.0, 1.0, quad_);
  }

  // (P_x, P_y, Q_x, Q_y) by differentiating under the integral.
  std::array<double, 4> PQ_grad(double x, double y, double xd, double yd) const {
    return integrate_vec<4>(
        [&](double s) {
          double v[kJetSlots] = {0, s * x, s * y, s * xd, s * yd};
          double b[3], bx[3], by[3];
          for (int i = 0; i < 3; ++i) {
            b[i] = B_[i](v);
            bx[i] = Bx_[i](v);
            by[i] = By_[i](v);
          }
          return std::array<double, 4>{
              s * (b[0] + s * (x * bx[0] + y * bx[1])),
              s * (b[1] + s * (x * by[0] + y * by[1])),
              s * (b[1] + s * (x * bx[1] + y * bx[2])),
              s * (b[2] + s * (x * by[1] + y * by[2])),
          };
        },
        0.0, 1.0, quad_);
  }

  // max |P - dG/dxd|, |Q - dG/dyd| at sampled first-jet points.
  double certify(const Box& positions, int samples, std::uint64_t seed, const SampleRanges& ranges = {}) const {
    Sampler s(seed);
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
      JetPoint p = s.jet(1, positions, ranges);
      const double x = p.x(), y = p.y(), xd = p.at_slot(3), yd = p.at_slot(4);
      auto pq = PQ(x, y, xd, yd);
      double gxd = detail::richardson_derivative([&](double h) { return G(x, y, xd + h, yd); }, 1e-3);
      double gyd = detail::richardson_derivative([&](double h) { return G(x, y, xd, yd + h); }, 1e-3);
      worst = std::max({worst, std::abs(pq[0] - gxd), std::abs(pq[1] - gyd)});
    }
    return worst;
  }

 private:
  double L0(const JetPoint& p) const {
    const double x = p.x(), y = p.y(), xd = p.at_slot(3), yd = p.at_slot(4);
    return integrate(
        [&](double s) {
          double v[kJetSlots] = {0, s * x, s * y, s * xd, s * yd};
          return x * A_[0](v) + y * A_[1](v);
        },
        0.0, 1.0, quad_);
  }

  QuadratureOptions quad_;
  std::array<JetFunction, 2> A_;
  std::array<JetFunction, 3> B_, Bx_, By_;
};

struct VainbergTontiResult {
  std::shared_ptr<const VainbergTonti> construction;
  NumericLagrangian second_order;
  NumericLagrangian reduced;
  double certification_residual = 0.0;
};

inline VainbergTontiResult vainberg_tonti(const ABDecomposition& ab, const Box& chart_domain,
                                          const QuadratureOptions& quad = {}, int certify_samples = 20,
                                          std::uint64_t seed = 42, const SampleRanges& ranges = {}) {
  auto vt = std::make_shared<const VainbergTonti>(ab, chart_domain, quad);
  VainbergTontiResult r;
  r.construction = vt;
  r.second_order = {2, [vt](const JetPoint& p) { return vt->second_order(p); }};
  r.reduced = {1, [vt](const JetPoint& p) { return vt->reduced(p); }};
  r.certification_residual = vt->certify(chart_domain, certify_samples, seed, ranges);
  return r;
}

}  // namespace globlag
