#pragma once

// Jet coordinates, total derivatives, and coordinate-basis differential forms
// over (t, x, y, xd, yd).

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "globlag/expr.hpp"

namespace globlag {

inline constexpr int kMaxJetOrder = 4;
inline constexpr int kJetSlots = 11;

inline constexpr std::array<std::string_view, kJetSlots> kJetVariables = {
    "t", "x", "y", "xd", "yd", "xdd", "ydd", "xddd", "yddd", "xdddd", "ydddd"};

// Slot of a canonical jet variable, or nullopt.
inline std::optional<int> jet_slot(std::string_view name) {
  for (int i = 0; i < kJetSlots; ++i)
    if (kJetVariables[i] == name) return i;
  return std::nullopt;
}

inline int jet_slot_order(int slot) { return slot <= 2 ? 0 : (slot - 1) / 2; }

// Slot of component c (0 for x, 1 for y) at derivative order k (0..4).
inline constexpr int jet_slot_of(int k, int c) { return 1 + 2 * k + c; }

// Highest derivative order among the free variables. Throws on names that are
// not canonical jet variables.
inline int jet_order(const Expression& e) {
  int order = 0;
  for (const auto& v : e.free_vars()) {
    auto s = jet_slot(v);
    if (!s) throw std::invalid_argument("unknown symbol '" + v + "' in jet expression");
    order = std::max(order, jet_slot_order(*s));
  }
  return order;
}

class JetPoint {
 public:
  JetPoint() = default;

  // derivs lists xd, yd, xdd, ydd, ... in slot order; its length must be 2*order.
  JetPoint(int order, double t, double x, double y, std::initializer_list<double> derivs = {})
      : order_(order) {
    if (order < 0 || order > kMaxJetOrder) throw std::out_of_range("jet order out of range");
    if (static_cast<int>(derivs.size()) != 2 * order)
      throw std::invalid_argument("JetPoint: expected " + std::to_string(2 * order) +
                                  " derivative values");
    v_[0] = t;
    v_[1] = x;
    v_[2] = y;
    int i = 3;
    for (double d : derivs) v_[i++] = d;
    check_finite();
  }

  static JetPoint from_values(int order, const std::array<double, kJetSlots>& values) {
    if (order < 0 || order > kMaxJetOrder) throw std::out_of_range("jet order out of range");
    JetPoint p;
    p.order_ = order;
    for (int i = 0; i < 1 + 2 * (order + 1); ++i) p.v_[i] = values[i];
    p.check_finite();
    return p;
  }

  int order() const { return order_; }
  double t() const { return v_[0]; }
  double x() const { return v_[1]; }
  double y() const { return v_[2]; }

  // k-th derivative of component c (0 = x, 1 = y).
  double derivative(int k, int c) const { return at_slot(jet_slot_of(k, c)); }

  double at_slot(int slot) const {
    if (slot < 0 || slot >= kJetSlots) throw std::out_of_range("jet slot out of range");
    if (jet_slot_order(slot) > order_)
      throw std::out_of_range("jet coordinate '" + std::string(kJetVariables[slot]) +
                              "' exceeds point order " + std::to_string(order_));
    return v_[slot];
  }

  double operator[](std::string_view name) const {
    auto s = jet_slot(name);
    if (!s) throw std::invalid_argument("unknown jet coordinate '" + std::string(name) + "'");
    return at_slot(*s);
  }

  JetPoint with_slot(int slot, double value) const {
    at_slot(slot);
    JetPoint p = *this;
    p.v_[slot] = value;
    return p;
  }

  // Raises or lowers the order; new coordinates are zero.
  JetPoint with_order(int order) const {
    JetPoint p = from_values(std::min(order, order_), v_);
    p.order_ = order;
    return p;
  }

  // Unused slots are zero.
  const std::array<double, kJetSlots>& values() const { return v_; }

 private:
  void check_finite() const {
    for (double d : v_)
      if (!std::isfinite(d)) throw std::invalid_argument("JetPoint: non-finite coordinate");
  }

  int order_ = 0;
  std::array<double, kJetSlots> v_{};
};

// Expression compiled against the jet slot layout.
class JetFunction {
 public:
  JetFunction() = default;
  explicit JetFunction(const Expression& e)
      : order_(jet_order(e)), code_(e, std::span<const std::string_view>(kJetVariables)) {}

  int order() const { return order_; }

  double operator()(const JetPoint& p) const {
    if (p.order() < order_)
      throw std::out_of_range("jet function of order " + std::to_string(order_) +
                              " evaluated at a point of order " + std::to_string(p.order()));
    return code_(p.values().data());
  }

  // No order check; the caller guarantees the slots are meaningful.
  double operator()(const double* values) const { return code_(values); }

 private:
  int order_ = 0;
  CompiledExpression code_;
};

inline Binding jet_binding(const JetPoint& p) {
  Binding b;
  for (int i = 0; i < 3 + 2 * p.order(); ++i) b.emplace(std::string(kJetVariables[i]), p.values()[i]);
  return b;
}

// d_t f = f_t + xd f_x + yd f_y + xdd f_xd + ...
inline Expression total_derivative(const Expression& f) {
  if (jet_order(f) > 3) throw std::invalid_argument("total_derivative: expression order exceeds 3");
  Expression out = differentiate(f, "t");
  for (int slot = 1; slot + 2 < kJetSlots; ++slot) {
    std::string_view v = kJetVariables[slot];
    if (!f.depends_on(v)) continue;
    out = out + Expression::variable(std::string(kJetVariables[slot + 2])) * differentiate(f, v);
  }
  return out;
}

struct Lagrangian {
  int order = 1;
  Expression L;

  Lagrangian() = default;
  Lagrangian(int order_, Expression L_) : order(order_), L(std::move(L_)) {
    if (order < 1 || order > 2) throw std::invalid_argument("Lagrangian order must be 1 or 2");
    if (jet_order(L) > order)
      throw std::invalid_argument("Lagrangian expression exceeds declared order " +
                                  std::to_string(order));
  }
};

// ---------------------------------------------------------------------------
// Differential forms in the coordinate basis. A basis element is a bitmask
// over FormCoord; bit order is the canonical (increasing) index order.

enum class FormCoord : int { t = 0, x = 1, y = 2, xd = 3, yd = 4 };
inline constexpr int kFormCoords = 5;
inline constexpr std::array<std::string_view, kFormCoords> kFormCoordNames = {"t", "x", "y", "xd", "yd"};

using BasisMask = std::uint8_t;
inline constexpr BasisMask kAllCoords = 0b11111;
inline constexpr BasisMask kFiberCoords = 0b11110;   // x, y, xd, yd
inline constexpr BasisMask kPositionCoords = 0b00110;  // x, y

inline constexpr BasisMask bit(FormCoord c) { return static_cast<BasisMask>(1u << static_cast<int>(c)); }

inline constexpr BasisMask mask_of(std::initializer_list<FormCoord> cs) {
  BasisMask m = 0;
  for (FormCoord c : cs) m |= bit(c);
  return m;
}

inline std::string mask_name(BasisMask m) {
  std::string s;
  for (int i = 0; i < kFormCoords; ++i)
    if (m & (1u << i)) {
      if (!s.empty()) s += "^";
      s += "d";
      s += kFormCoordNames[i];
    }
  return s.empty() ? "1" : s;
}

// Sign of e_a ^ e_b relative to e_{a|b}, or 0 when they overlap.
inline int wedge_sign(BasisMask a, BasisMask b) {
  if (a & b) return 0;
  int swaps = 0;
  for (int i = 0; i < kFormCoords; ++i)
    if (b & (1u << i)) swaps += std::popcount(static_cast<unsigned>(a >> (i + 1)));
  return swaps % 2 ? -1 : 1;
}

struct FormValues {
  int degree = 0;
  std::array<double, 32> c{};

  double operator[](BasisMask m) const { return c[m]; }
  double max_abs() const {
    double m = 0;
    for (double v : c) m = std::max(m, std::abs(v));
    return m;
  }
  friend FormValues operator-(FormValues a, const FormValues& b) {
    for (int i = 0; i < 32; ++i) a.c[i] -= b.c[i];
    return a;
  }
  friend FormValues operator+(FormValues a, const FormValues& b) {
    for (int i = 0; i < 32; ++i) a.c[i] += b.c[i];
    return a;
  }
};

class DifferentialForm {
 public:
  DifferentialForm() = default;
  DifferentialForm(int degree, BasisMask base) : degree_(degree), base_(base) {
    if (degree < 0 || degree > 3) throw std::invalid_argument("form degree must be 0..3");
  }

  static DifferentialForm differential(FormCoord c) {
    DifferentialForm f(1, bit(c));
    f.set(bit(c), 1.0);
    return f;
  }
  static DifferentialForm scalar(Expression e) {
    DifferentialForm f(0, 0);
    f.set(0, std::move(e));
    return f;
  }

  int degree() const { return degree_; }
  BasisMask base() const { return base_; }
  const std::map<BasisMask, Expression>& terms() const { return terms_; }

  Expression coefficient(BasisMask m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? Expression(0.0) : it->second;
  }

  void set(BasisMask m, Expression e) {
    if (std::popcount(static_cast<unsigned>(m)) != degree_)
      throw std::invalid_argument("basis element " + mask_name(m) + " does not match degree " +
                                  std::to_string(degree_));
    base_ |= m;
    if (e.is_zero())
      terms_.erase(m);
    else
      terms_[m] = std::move(e);
  }

  void add(BasisMask m, const Expression& e) { set(m, coefficient(m) + e); }

  friend DifferentialForm operator+(const DifferentialForm& a, const DifferentialForm& b) {
    check_same_degree(a, b);
    DifferentialForm r(a.degree_, a.base_ | b.base_);
    r.terms_ = a.terms_;
    for (const auto& [m, e] : b.terms_) r.add(m, e);
    return r;
  }
  friend DifferentialForm operator-(const DifferentialForm& a, const DifferentialForm& b) {
    return a + (-1.0) * b;
  }
  friend DifferentialForm operator*(const Expression& s, const DifferentialForm& f) {
    DifferentialForm r(f.degree_, f.base_);
    for (const auto& [m, e] : f.terms_) r.set(m, s * e);
    return r;
  }

  friend DifferentialForm wedge(const DifferentialForm& a, const DifferentialForm& b) {
    DifferentialForm r(a.degree_ + b.degree_, a.base_ | b.base_);
    for (const auto& [ma, ea] : a.terms_)
      for (const auto& [mb, eb] : b.terms_) {
        int s = wedge_sign(ma, mb);
        if (s == 0) continue;
        r.add(static_cast<BasisMask>(ma | mb), s > 0 ? ea * eb : -(ea * eb));
      }
    return r;
  }

  DifferentialForm map_coefficients(const std::function<Expression(const Expression&)>& fn) const {
    DifferentialForm r(degree_, base_);
    for (const auto& [m, e] : terms_) r.set(m, fn(e));
    return r;
  }

  DifferentialForm substitute(const Substitution& s) const {
    return map_coefficients([&](const Expression& e) { return globlag::substitute(e, s); });
  }

  int coefficient_order() const {
    int o = 0;
    for (const auto& [m, e] : terms_) o = std::max(o, jet_order(e));
    return o;
  }

  FormValues evaluate(const JetPoint& p) const {
    FormValues v;
    v.degree = degree_;
    for (const auto& [m, e] : terms_) v.c[m] = e.evaluate(jet_binding(p));
    return v;
  }

 private:
  static void check_same_degree(const DifferentialForm& a, const DifferentialForm& b) {
    if (a.degree_ != b.degree_) throw std::invalid_argument("adding forms of different degree");
  }

  int degree_ = 0;
  BasisMask base_ = 0;
  std::map<BasisMask, Expression> terms_;
};

inline DifferentialForm operator*(double s, const DifferentialForm& f) { return Expression(s) * f; }

inline DifferentialForm dt() { return DifferentialForm::differential(FormCoord::t); }
inline DifferentialForm dx() { return DifferentialForm::differential(FormCoord::x); }
inline DifferentialForm dy() { return DifferentialForm::differential(FormCoord::y); }
inline DifferentialForm dxd() { return DifferentialForm::differential(FormCoord::xd); }
inline DifferentialForm dyd() { return DifferentialForm::differential(FormCoord::yd); }

inline Expression jet_var(std::string_view name) { return Expression::variable(std::string(name)); }

// Contact basis: wx = dx - xd dt, wy = dy - yd dt, wxd = dxd - xdd dt, wyd = dyd - ydd dt.
inline DifferentialForm contact_x() { return dx() - jet_var("xd") * dt(); }
inline DifferentialForm contact_y() { return dy() - jet_var("yd") * dt(); }
inline DifferentialForm contact_xd() { return dxd() - jet_var("xdd") * dt(); }
inline DifferentialForm contact_yd() { return dyd() - jet_var("ydd") * dt(); }

// Components of the total-derivative vector along (t, x, y, xd, yd).
inline std::array<Expression, kFormCoords> total_derivative_vector() {
  return {Expression(1.0), jet_var("xd"), jet_var("yd"), jet_var("xdd"), jet_var("ydd")};
}

// Symbolic exterior derivative. Coefficients must be functions of
// (t, x, y, xd, yd) only, since there is no dxdd in the basis.
inline DifferentialForm exterior_derivative(const DifferentialForm& rho) {
  DifferentialForm out(rho.degree() + 1, rho.base());
  for (const auto& [m, e] : rho.terms()) {
    if (jet_order(e) > 1)
      throw std::invalid_argument("exterior_derivative: coefficient of " + mask_name(m) +
                                  " depends on second-order jet coordinates");
    for (int c = 0; c < kFormCoords; ++c) {
      BasisMask b = static_cast<BasisMask>(1u << c);
      if (m & b) continue;
      Expression de = differentiate(e, kFormCoordNames[c]);
      if (de.is_zero()) continue;
      int s = wedge_sign(b, m);
      out.add(static_cast<BasisMask>(m | b), s > 0 ? de : -de);
    }
  }
  return out;
}

// h: dt -> dt, dx -> xd dt, dxd -> xdd dt.
inline Lagrangian horizontalize(const DifferentialForm& rho) {
  if (rho.degree() != 1) throw std::invalid_argument("horizontalize expects a 1-form");
  auto v = total_derivative_vector();
  Expression L(0.0);
  for (const auto& [m, e] : rho.terms()) L = L + e * v[std::countr_zero(static_cast<unsigned>(m))];
  return Lagrangian(std::max(1, jet_order(L)), L);
}

struct ContactDecomposition {
  Lagrangian horizontal;
  Expression A_x, A_y;    // coefficients of wx, wy
  Expression A_xd, A_yd;  // coefficients of wxd, wyd; zero on first-order forms
};

inline ContactDecomposition contact_decompose(const DifferentialForm& rho) {
  if (rho.degree() != 1) throw std::invalid_argument("contact_decompose expects a 1-form");
  return {horizontalize(rho), rho.coefficient(bit(FormCoord::x)), rho.coefficient(bit(FormCoord::y)),
          rho.coefficient(bit(FormCoord::xd)), rho.coefficient(bit(FormCoord::yd))};
}

inline DifferentialForm reassemble(const ContactDecomposition& d) {
  return d.horizontal.L * dt() + d.A_x * contact_x() + d.A_y * contact_y() + d.A_xd * contact_xd() +
         d.A_yd * contact_yd();
}

// Coefficients of wx^dt, wy^dt, wxd^dt, wyd^dt in the 1-contact part of a 2-form.
inline std::array<Expression, 4> p1_full(const DifferentialForm& rho) {
  if (rho.degree() != 2) throw std::invalid_argument("p1 expects a 2-form");
  auto v = total_derivative_vector();
  std::array<Expression, 4> out;
  for (int k = 1; k < kFormCoords; ++k) {
    Expression sum(0.0);
    for (int b = 0; b < kFormCoords; ++b) {
      if (b == k) continue;
      BasisMask m = static_cast<BasisMask>((1u << k) | (1u << b));
      Expression c = rho.coefficient(m);
      if (c.is_zero()) continue;
      // rho(d_k, d_b) = +c when k < b, -c otherwise.
      sum = sum + (k < b ? c : -c) * v[b];
    }
    out[k - 1] = sum;
  }
  return out;
}

inline std::array<Expression, 2> p1(const DifferentialForm& rho) {
  auto f = p1_full(rho);
  return {f[0], f[1]};
}

// ---------------------------------------------------------------------------
// Numeric forms.

struct FormField {
  int degree = 0;
  BasisMask base = kAllCoords;
  std::function<FormValues(const JetPoint&)> eval;

  FormValues operator()(const JetPoint& p) const { return eval(p); }
};

inline FormField to_field(const DifferentialForm& rho) {
  std::vector<std::pair<BasisMask, JetFunction>> coeffs;
  for (const auto& [m, e] : rho.terms()) coeffs.emplace_back(m, JetFunction(e));
  int degree = rho.degree();
  return {degree, rho.base(), [coeffs = std::move(coeffs), degree](const JetPoint& p) {
            FormValues v;
            v.degree = degree;
            for (const auto& [m, f] : coeffs) v.c[m] = f(p);
            return v;
          }};
}

inline FormField operator-(const FormField& a, const FormField& b) {
  return {a.degree, static_cast<BasisMask>(a.base | b.base),
          [a, b](const JetPoint& p) { return a(p) - b(p); }};
}
inline FormField operator+(const FormField& a, const FormField& b) {
  return {a.degree, static_cast<BasisMask>(a.base | b.base),
          [a, b](const JetPoint& p) { return a(p) + b(p); }};
}

// Fourth-order central differences along each coordinate in `directions`.
// Coefficients of the input must not vary along coordinates outside it.
inline FormField exterior_derivative_fd(const FormField& rho, BasisMask directions, double step = 1e-4) {
  return {rho.degree + 1, static_cast<BasisMask>(rho.base | directions),
          [rho, directions, step](const JetPoint& p) {
            FormValues out;
            out.degree = rho.degree + 1;
            for (int c = 0; c < kFormCoords; ++c) {
              if (!(directions & (1u << c))) continue;
              double h = step * std::max(1.0, std::abs(p.at_slot(c)));
              auto at = [&](double s) { return rho(p.with_slot(c, p.at_slot(c) + s)); };
              FormValues f2 = at(2 * h), f1 = at(h), m1 = at(-h), m2 = at(-2 * h);
              for (int m = 0; m < 32; ++m) {
                if (m & (1 << c)) continue;
                if (std::popcount(static_cast<unsigned>(m)) != rho.degree) continue;
                double deriv = (-f2.c[m] + 8 * f1.c[m] - 8 * m1.c[m] + m2.c[m]) / (12 * h);
                int s = wedge_sign(static_cast<BasisMask>(1u << c), static_cast<BasisMask>(m));
                out.c[m | (1 << c)] += s * deriv;
              }
            }
            return out;
          }};
}

}  // namespace globlag
