#pragma once

// Building blocks of a global Lagrangian: mu0 with d(mu0) = alpha0^dt, the
// homotopy 1-form kappa with alpha' - omega = d(kappa), and the position
// 2-form omega. When omega vanishes, h(mu0 + kappa) is a global Lagrangian.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "globlag/jet.hpp"
#include "globlag/lagrange.hpp"
#include "globlag/lepage.hpp"
#include "globlag/quadrature.hpp"
#include "globlag/sampling.hpp"
#include "globlag/varcheck.hpp"

namespace globlag {

class GlobalizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// omega does not vanish; the cohomology solver must supply eta.
class NotSimple : public GlobalizeError {
 public:
  NotSimple(const std::string& what, JetPoint worst, double value)
      : GlobalizeError(what), worst_(worst), value_(value) {}
  const JetPoint& worst() const noexcept { return worst_; }
  double value() const noexcept { return value_; }

 private:
  JetPoint worst_;
  double value_;
};

// Quadrature is tight by default so that finite differences of the results stay accurate.
inline QuadratureOptions default_fiber_quadrature() { return {16, 1e-13, 1 << 10}; }

inline DifferentialForm mu0(const AlphaDecomposition& a) { return Expression(-1.0) * jet_var("t") * a.alpha0; }

inline DifferentialForm mu0(const SourceForm& eps, const ABDecomposition& ab) {
  return mu0(decompose_alpha(eps, ab));
}

enum class FiberVariable { xd, yd };

inline FormCoord fiber_coord(FiberVariable v) { return v == FiberVariable::xd ? FormCoord::xd : FormCoord::yd; }

// Pullback by the section that sets the given velocity to zero.
inline DifferentialForm section_pullback(const DifferentialForm& rho, FiberVariable v) {
  const FormCoord c = fiber_coord(v);
  const std::string name(kFormCoordNames[static_cast<int>(c)]);
  DifferentialForm out(rho.degree(), static_cast<BasisMask>(rho.base() & ~bit(c)));
  for (const auto& [m, e] : rho.terms())
    if (!(m & bit(c))) out.set(m, substitute(e, name, 0.0));
  return out;
}

// Contraction with d/d(fiber coordinate) followed by the integral of each
// coefficient from 0 to the fiber coordinate's value, other coordinates fixed.
// K2 (yd) expects a form already pulled back to the xd = 0 section.
inline FormField fiber_integrate(const DifferentialForm& rho, FiberVariable v,
                                 const QuadratureOptions& quad = default_fiber_quadrature()) {
  if (rho.degree() < 1 || rho.degree() > 2) throw GlobalizeError("fiber integration is implemented for degrees 1 and 2");
  if (rho.coefficient_order() > 1) throw GlobalizeError("fiber integration expects coefficients on first jets");
  for (const auto& [m, e] : rho.terms())
    if (e.depends_on("t")) throw GlobalizeError("fiber integration expects t-independent coefficients");
  if (v == FiberVariable::yd)
    for (const auto& [m, e] : rho.terms())
      if ((m & bit(FormCoord::xd)) || e.depends_on("xd"))
        throw GlobalizeError("K2 expects a form on the xd = 0 section; pull back first");

  const FormCoord c = fiber_coord(v);
  const int slot = static_cast<int>(c);
  struct Term {
    int out_index;
    double sign;
    JetFunction f;
  };
  std::vector<BasisMask> outs;
  std::vector<Term> terms;
  for (const auto& [m, e] : rho.terms()) {
    if (!(m & bit(c))) continue;
    BasisMask out = static_cast<BasisMask>(m & ~bit(c));
    int below = std::popcount(static_cast<unsigned>(m & (bit(c) - 1)));
    auto it = std::find(outs.begin(), outs.end(), out);
    int idx = static_cast<int>(it - outs.begin());
    if (it == outs.end()) outs.push_back(out);
    terms.push_back({idx, below % 2 ? -1.0 : 1.0, JetFunction(e)});
  }
  const int degree = rho.degree() - 1;
  auto shared_terms = std::make_shared<const std::vector<Term>>(std::move(terms));
  return {degree, kFiberCoords, [shared_terms, outs, degree, slot, quad](const JetPoint& p) {
            FormValues r;
            r.degree = degree;
            if (shared_terms->empty()) return r;
            std::array<double, kJetSlots> base{};
            for (int i = 0; i < 5; ++i) base[i] = p.values()[i];
            if (p.order() < 1) throw GlobalizeError("fiber integration needs a point of order >= 1");
            auto integral = integrate_vec<4>(
                [&](double nu) {
                  std::array<double, kJetSlots> w = base;
                  w[slot] = nu;
                  std::array<double, 4> acc{};
                  for (const auto& t : *shared_terms) acc[t.out_index] += t.sign * t.f(w.data());
                  return acc;
                },
                0.0, base[slot], quad);
            for (std::size_t k = 0; k < outs.size(); ++k) r.c[outs[k]] = integral[k];
            return r;
          }};
}

// kappa = K1 alpha' + K2 (section pullback of alpha').
inline FormField kappa(const AlphaDecomposition& a, const QuadratureOptions& quad = default_fiber_quadrature()) {
  FormField k1 = fiber_integrate(a.alpha_prime, FiberVariable::xd, quad);
  FormField k2 = fiber_integrate(section_pullback(a.alpha_prime, FiberVariable::xd), FiberVariable::yd, quad);
  return k1 + k2;
}

// omega = D/2 at zero velocity, dx^dy.
inline DifferentialForm omega(const ABDecomposition& ab) {
  Expression coeff = substitute(substitute(Expression(0.5) * ab.curl_velocity(), "xd", 0.0), "yd", 0.0);
  DifferentialForm w(2, kPositionCoords);
  w.set(mask_of({FormCoord::x, FormCoord::y}), coeff);
  return w;
}

inline Expression omega_coefficient(const DifferentialForm& w) {
  return w.coefficient(mask_of({FormCoord::x, FormCoord::y}));
}

// The dx^dy coefficient as a function of position; omega has no t or velocity dependence.
inline std::function<double(double, double)> omega_position_field(const DifferentialForm& w) {
  auto f = std::make_shared<JetFunction>(omega_coefficient(w));
  return [f](double x, double y) {
    std::array<double, 3> v{0.0, x, y};
    return (*f)(v.data());
  };
}

struct OmegaStatus {
  bool zero = true;
  bool symbolic_zero = true;
  double max_abs = 0.0;
  std::optional<JetPoint> worst;
  int samples = 0;
};

// A symbolic zero short-circuits; otherwise the exact coefficient is sampled.
inline OmegaStatus omega_status(const DifferentialForm& w, const Box& positions, int samples, std::uint64_t seed,
                                double tol = 1e-12, const SampleRanges& ranges = {}) {
  OmegaStatus s;
  Expression c = omega_coefficient(w);
  if (c.is_zero()) return s;
  s.symbolic_zero = false;
  auto m = detail::sampled_max_abs(c, positions, 0, samples, seed, ranges);
  s.max_abs = m.value;
  s.worst = m.worst;
  s.samples = samples;
  s.zero = m.value < tol;
  return s;
}

// h(rho) for a numeric 1-form with no dxd, dyd component; first order.
inline NumericLagrangian horizontalize_field(const FormField& rho) {
  if (rho.degree != 1) throw GlobalizeError("horizontalization of a numeric form expects degree 1");
  return {1, [rho](const JetPoint& p) {
            JetPoint q = p.order() > 1 ? p.with_order(1) : p;
            FormValues v = rho(q);
            if (v.c[bit(FormCoord::xd)] != 0.0 || v.c[bit(FormCoord::yd)] != 0.0)
              throw GlobalizeError("numeric form has velocity-differential components");
            return v.c[bit(FormCoord::t)] + v.c[bit(FormCoord::x)] * q.at_slot(3) +
                   v.c[bit(FormCoord::y)] * q.at_slot(4);
          }};
}

struct GlobalizeOptions {
  VarcheckOptions varcheck;
  LepageOptions lepage;
  QuadratureOptions quad = default_fiber_quadrature();
  double omega_tol = 1e-12;
  int omega_samples = 200;
};

// Everything the global construction needs in one chart.
struct ChartConstruction {
  SourceForm eps;
  Box positions;
  ABDecomposition ab;
  DifferentialForm alpha;
  AlphaDecomposition split;
  DifferentialForm mu0;
  DifferentialForm omega;
  FormField kappa;
};

inline ChartConstruction construct_chart(const SourceForm& eps, const Box& positions,
                                         const GlobalizeOptions& opts = {}) {
  ChartConstruction c;
  c.eps = eps;
  c.positions = positions;
  c.ab = decompose(eps, positions, opts.varcheck);
  LepageOptions lo = opts.lepage;
  lo.positions = positions;
  c.alpha = lepage_equivalent(eps, c.ab, lo);
  c.split = decompose_alpha(eps, c.ab);
  c.mu0 = mu0(c.split);
  c.omega = omega(c.ab);
  c.kappa = kappa(c.split, opts.quad);
  return c;
}

// h(mu0 + kappa) plus an optional numeric 1-form (eta) on positions.
inline CompositeLagrangian assemble_lagrangian(const ChartConstruction& c, const std::optional<FormField>& eta = {},
                                               const EulerLagrangeOptions& el = {}) {
  EulerLagrangeOptions o = el;
  o.positions = c.positions;
  CompositeLagrangian lambda(horizontalize(c.mu0), o);
  lambda.add_numeric(horizontalize_field(c.kappa));
  if (eta) lambda.add_numeric(horizontalize_field(*eta));
  return lambda;
}

inline CompositeLagrangian simple_global_lagrangian(const ChartConstruction& c, const GlobalizeOptions& opts = {}) {
  OmegaStatus s = omega_status(c.omega, c.positions, opts.omega_samples, opts.varcheck.seed + 5, opts.omega_tol,
                               opts.varcheck.ranges);
  if (!s.zero)
    throw NotSimple("omega does not vanish: |omega| = " + std::to_string(s.max_abs), *s.worst, s.max_abs);
  return assemble_lagrangian(c);
}

// max |alpha' - omega - d(kappa)| with d(kappa) by finite differences.
inline double keq_residual(const ChartConstruction& c, int samples, std::uint64_t seed,
                           const SampleRanges& ranges = {}) {
  FormField lhs = to_field(c.split.alpha_prime) - to_field(c.omega);
  FormField dk = exterior_derivative_fd(c.kappa, kFiberCoords);
  Sampler s(seed);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    JetPoint p = s.jet(1, c.positions, ranges);
    worst = std::max(worst, (lhs(p) - dk(p)).max_abs());
  }
  return worst;
}

// max |d(mu0) - alpha0^dt|.
inline double mu0_residual(const ChartConstruction& c, int samples, std::uint64_t seed,
                           const SampleRanges& ranges = {}) {
  DifferentialForm diff = exterior_derivative(c.mu0) - wedge(c.split.alpha0, dt());
  FormField f = to_field(diff);
  Sampler s(seed);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) worst = std::max(worst, f(s.jet(1, c.positions, ranges)).max_abs());
  return worst;
}

// max |h(mu0) + t (eps_x xd + eps_y yd)|, both sides as exact expressions.
inline double horizontal_mu0_residual(const ChartConstruction& c, int samples, std::uint64_t seed,
                                      const SampleRanges& ranges = {}) {
  Expression expected =
      Expression(-1.0) * jet_var("t") * (c.eps.eps_x * jet_var("xd") + c.eps.eps_y * jet_var("yd"));
  JetFunction diff(horizontalize(c.mu0).L - expected);
  Sampler s(seed);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) worst = std::max(worst, std::abs(diff(s.jet(2, c.positions, ranges))));
  return worst;
}

}  // namespace globlag
