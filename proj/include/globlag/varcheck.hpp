#pragma once

// Affine-in-acceleration decomposition of source forms and the Helmholtz
// conditions for local variationality.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "globlag/atlas.hpp"
#include "globlag/expr.hpp"
#include "globlag/jet.hpp"
#include "globlag/sampling.hpp"

namespace globlag {

class VarcheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeDependenceError : public VarcheckError {
 public:
  using VarcheckError::VarcheckError;
};

// Sampled identity failed; carries the worst point.
class SampledFailure : public VarcheckError {
 public:
  SampledFailure(const std::string& what, JetPoint worst, double residual)
      : VarcheckError(what), worst_(worst), residual_(residual) {}
  const JetPoint& worst() const noexcept { return worst_; }
  double residual() const noexcept { return residual_; }

 private:
  JetPoint worst_;
  double residual_;
};

class NotAffine : public SampledFailure {
 public:
  using SampledFailure::SampledFailure;
};

class AsymmetricB : public SampledFailure {
 public:
  using SampledFailure::SampledFailure;
};

// (eps_x, eps_y) in canonical second-jet variables.
struct SourceForm {
  Expression eps_x, eps_y;
  bool time_independent = true;

  SourceForm() = default;
  SourceForm(Expression ex, Expression ey, bool time_independent_ = true)
      : eps_x(std::move(ex)), eps_y(std::move(ey)), time_independent(time_independent_) {
    if (jet_order(eps_x) > 2 || jet_order(eps_y) > 2)
      throw VarcheckError("source form depends on jet coordinates above order 2");
    if (time_independent && (eps_x.depends_on("t") || eps_y.depends_on("t")))
      throw TimeDependenceError("source form depends on t but is declared time-independent");
  }

  bool depends_on_time() const { return eps_x.depends_on("t") || eps_y.depends_on("t"); }
};

inline SourceField to_source_field(const SourceForm& e) {
  JetFunction fx(e.eps_x), fy(e.eps_y);
  return [fx, fy](const JetPoint& p) { return std::array<double, 2>{fx(p), fy(p)}; };
}

struct ABDecomposition {
  Expression A_x, A_y, B_xx, B_xy, B_yy;

  // D = dA_x/dyd - dA_y/dxd, the antisymmetric velocity part of A.
  Expression curl_velocity() const { return differentiate(A_x, "yd") - differentiate(A_y, "xd"); }
  SourceForm reconstruct(bool time_independent = true) const {
    Expression xdd = jet_var("xdd"), ydd = jet_var("ydd");
    return SourceForm(A_x + B_xx * xdd + B_xy * ydd, A_y + B_xy * xdd + B_yy * ydd, time_independent);
  }
};

struct VarcheckOptions {
  double tol = 1e-9;
  int samples = 200;
  std::uint64_t seed = 42;
  double affine_tol = 1e-12;
  int affine_samples = 50;
  int raw_samples = 10;
  SampleRanges ranges;
  bool allow_time_dependence = false;
};

namespace detail {

struct SampledMax {
  double value = 0.0;
  std::optional<JetPoint> worst;

  void update(double v, const JetPoint& p) {
    if (std::isnan(v)) v = INFINITY;
    if (!worst || v > value) {
      value = v;
      worst = p;
    }
  }
};

// Max over `n` sampled points of |e| (scaled by max(1, |scale|) when given).
inline SampledMax sampled_max_abs(const Expression& e, const Box& box, int order, int n, std::uint64_t seed,
                                  const SampleRanges& ranges, const Expression* scale = nullptr) {
  SampledMax m;
  if (e.is_zero()) return m;
  JetFunction f(e);
  std::optional<JetFunction> s;
  if (scale) s.emplace(*scale);
  Sampler sampler(seed);
  for (int i = 0; i < n; ++i) {
    JetPoint p = sampler.jet(order, box, ranges);
    double v = std::abs(f(p));
    if (s) v /= std::max(1.0, std::abs((*s)(p)));
    m.update(v, p);
  }
  return m;
}

}  // namespace detail

// B's are the acceleration partials; A's are the values at zero acceleration.
// Affinity and B symmetry are verified by sampling in `positions`.
inline ABDecomposition decompose(const SourceForm& eps, const Box& positions, const VarcheckOptions& opts = {}) {
  const Expression* comps[2] = {&eps.eps_x, &eps.eps_y};
  const char* acc[2] = {"xdd", "ydd"};
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) {
        Expression second = differentiate(differentiate(*comps[i], acc[a]), acc[b]);
        auto m = detail::sampled_max_abs(second, positions, 2, opts.affine_samples, opts.seed + 17, opts.ranges);
        if (m.value >= opts.affine_tol)
          throw NotAffine(std::string("eps_") + (i == 0 ? "x" : "y") + " is not affine in the accelerations: d2/d" +
                              acc[a] + "d" + acc[b] + " = " + std::to_string(m.value),
                          *m.worst, m.value);
      }
  Substitution zero_acc{{"xdd", Expression(0.0)}, {"ydd", Expression(0.0)}};
  auto clean = [&](const Expression& e) { return substitute(e, zero_acc); };
  ABDecomposition d;
  d.A_x = clean(eps.eps_x);
  d.A_y = clean(eps.eps_y);
  d.B_xx = clean(differentiate(eps.eps_x, "xdd"));
  d.B_xy = clean(differentiate(eps.eps_x, "ydd"));
  d.B_yy = clean(differentiate(eps.eps_y, "ydd"));
  Expression B_yx = clean(differentiate(eps.eps_y, "xdd"));
  Expression diff = d.B_xy - B_yx;
  auto m = detail::sampled_max_abs(diff, positions, 1, opts.affine_samples, opts.seed + 23, opts.ranges, &d.B_xy);
  if (m.value >= opts.affine_tol)
    throw AsymmetricB("acceleration coefficients are not symmetric: |B_xy - B_yx| = " + std::to_string(m.value),
                      *m.worst, m.value);
  return d;
}

struct ConditionResidual {
  std::string name;
  double max_residual = 0.0;
  std::optional<JetPoint> worst;
  bool pass = true;
};

struct HelmholtzReport {
  bool pass = false;
  std::vector<ConditionResidual> conditions;
  std::vector<ConditionResidual> raw_conditions;
  // Largest change of a raw residual when only third-order coordinates vary.
  double third_order_dependence = 0.0;
  bool cross_check_agrees = true;
  std::optional<std::string> failed_condition;
  std::optional<ABDecomposition> decomposition;
  std::vector<std::string> warnings;
};

// Symbolic residual expressions of the affine-form conditions, in report order.
inline std::vector<std::pair<std::string, Expression>> helmholtz_ab_conditions(const ABDecomposition& d) {
  auto D = [](const Expression& e, const char* v) { return differentiate(e, v); };
  Expression xd = jet_var("xd"), yd = jet_var("yd");
  Expression curl = d.curl_velocity();
  return {
      {"B_xx_yd", D(d.B_xx, "yd") - D(d.B_xy, "xd")},
      {"B_yy_xd", D(d.B_yy, "xd") - D(d.B_xy, "yd")},
      {"A_x_xd", D(d.A_x, "xd") - D(d.B_xx, "x") * xd - D(d.B_xx, "y") * yd},
      {"A_y_yd", D(d.A_y, "yd") - D(d.B_yy, "x") * xd - D(d.B_yy, "y") * yd},
      {"A_cross", D(d.A_x, "yd") + D(d.A_y, "xd") - Expression(2.0) * D(d.B_xy, "x") * xd -
                      Expression(2.0) * D(d.B_xy, "y") * yd},
      {"A_curl", D(d.A_x, "y") - D(d.A_y, "x") - Expression(0.5) * D(curl, "x") * xd -
                     Expression(0.5) * D(curl, "y") * yd},
  };
}

// Residuals of the second-jet form of the conditions; these contain formal
// third-order coordinates through d/dt.
inline std::vector<std::pair<std::string, Expression>> helmholtz_raw_conditions(const SourceForm& e) {
  auto D = [](const Expression& f, const char* v) { return differentiate(f, v); };
  const Expression& ex = e.eps_x;
  const Expression& ey = e.eps_y;
  return {
      {"acc_symmetry", D(ex, "ydd") - D(ey, "xdd")},
      {"x_velocity", D(ex, "xd") - total_derivative(D(ex, "xdd"))},
      {"y_velocity", D(ey, "yd") - total_derivative(D(ey, "ydd"))},
      {"cross_velocity", D(ex, "yd") + D(ey, "xd") - total_derivative(D(ex, "ydd") + D(ey, "xdd"))},
      {"position_curl", D(ex, "y") - D(ey, "x") - Expression(0.5) * total_derivative(D(ex, "yd") - D(ey, "xd"))},
  };
}

inline HelmholtzReport helmholtz(const SourceForm& eps, const Box& positions, const VarcheckOptions& opts = {}) {
  HelmholtzReport r;
  if (eps.depends_on_time()) {
    if (!opts.allow_time_dependence)
      throw TimeDependenceError("source form depends on t; enable time dependence explicitly to check it");
    r.warnings.push_back(
        "source form depends on t; the affine-form conditions are applied without time derivatives, "
        "outside the time-independent setting they were derived for");
  }

  try {
    r.decomposition = decompose(eps, positions, opts);
  } catch (const NotAffine& e) {
    r.conditions.push_back({"affine_in_acceleration", e.residual(), e.worst(), false});
    r.failed_condition = "affine_in_acceleration";
  } catch (const AsymmetricB& e) {
    r.conditions.push_back({"affine_in_acceleration", 0.0, std::nullopt, true});
    r.conditions.push_back({"B_symmetry", e.residual(), e.worst(), false});
    r.failed_condition = "B_symmetry";
  }

  if (r.decomposition) {
    r.conditions.push_back({"affine_in_acceleration", 0.0, std::nullopt, true});
    r.conditions.push_back({"B_symmetry", 0.0, std::nullopt, true});
    std::uint64_t k = 0;
    for (const auto& [name, expr] : helmholtz_ab_conditions(*r.decomposition)) {
      auto m = detail::sampled_max_abs(expr, positions, 1, opts.samples, opts.seed + 101 * ++k, opts.ranges);
      bool ok = m.value < opts.tol;
      r.conditions.push_back({name, m.value, m.worst, ok});
      if (!ok && !r.failed_condition) r.failed_condition = name;
    }
  }
  r.pass = !r.failed_condition;

  // Cross-check on the second-jet form at a few points of order 3, and
  // dependence on the formal third-order coordinates.
  Sampler s(opts.seed + 7);
  bool raw_pass = true;
  for (const auto& [name, expr] : helmholtz_raw_conditions(eps)) {
    JetFunction f(expr);
    detail::SampledMax m;
    for (int i = 0; i < opts.raw_samples; ++i) {
      JetPoint p = s.jet(3, positions, opts.ranges);
      double v = f(p);
      m.update(std::abs(v), p);
      JetPoint q = p.with_slot(jet_slot_of(3, 0), s.uniform(-opts.ranges.higher, opts.ranges.higher))
                       .with_slot(jet_slot_of(3, 1), s.uniform(-opts.ranges.higher, opts.ranges.higher));
      r.third_order_dependence = std::max(r.third_order_dependence, std::abs(f(q) - v));
    }
    bool ok = m.value < opts.tol;
    raw_pass = raw_pass && ok;
    r.raw_conditions.push_back({name, m.value, m.worst, ok});
  }
  r.cross_check_agrees = raw_pass == r.pass;
  if (!r.cross_check_agrees)
    r.warnings.push_back("second-jet cross-check disagrees with the affine-form verdict");
  if (r.pass && r.third_order_dependence >= opts.tol)
    r.warnings.push_back("third-order coordinates do not cancel in the second-jet conditions");
  return r;
}

}  // namespace globlag
