#pragma once

// Solving omega = d(eta) for a position 2-form on a surface covered by a
// finite chain of coordinate boxes.
//
// Each cell V_j lies in one chart. Bumps psi_j form a partition of unity; the
// mass of psi_j omega plus whatever earlier cells handed over is pushed into a
// unit-mass bump theta_j inside V_j and V_K(j), and the zero-mass remainder
// gets a compactly supported primitive. The mass left in the last cell must
// vanish, or be absorbed by a declared end region where the cover is cut off.
//
// Primitives are built on tensor Gauss-Legendre panel grids. The integrand is
// replaced by its panel interpolant and integrated exactly, so d(eta) equals
// the interpolant of the integrand up to rounding.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "globlag/atlas.hpp"
#include "globlag/jet.hpp"
#include "globlag/quadrature.hpp"
#include "globlag/sampling.hpp"

namespace globlag {

class CohomologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonzeroMass : public CohomologyError {
 public:
  NonzeroMass(const std::string& what, double mass) : CohomologyError(what), mass_(mass) {}
  double mass() const noexcept { return mass_; }

 private:
  double mass_;
};

class SupportError : public CohomologyError {
 public:
  using CohomologyError::CohomologyError;
};

// Mass left in the last cell of a chain without an end region.
class Obstruction : public CohomologyError {
 public:
  Obstruction(const std::string& what, std::vector<double> masses, double c_last, double enlarged_c_last,
              bool topological)
      : CohomologyError(what),
        masses_(std::move(masses)),
        c_last_(c_last),
        enlarged_c_last_(enlarged_c_last),
        topological_(topological) {}
  const std::vector<double>& masses() const noexcept { return masses_; }
  double c_last() const noexcept { return c_last_; }
  double enlarged_c_last() const noexcept { return enlarged_c_last_; }
  // True when enlarging the last cell does not reduce the leftover mass.
  bool topological() const noexcept { return topological_; }

 private:
  std::vector<double> masses_;
  double c_last_, enlarged_c_last_;
  bool topological_;
};

// exp(-1/(1-u^2)) on (-1, 1), zero elsewhere.
inline double bump_profile(double u) { return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; }

inline double bump_profile_mass() {
  static const double m = integrate(bump_profile, -1.0, 1.0, {16, 1e-14, 1 << 12});
  return m;
}

// Tensor bump on a box, maximal value exp(-2) at the centre.
inline double box_bump(const Box& b, double x, double y) {
  return bump_profile((x - b.x.mid()) / (0.5 * b.x.width())) * bump_profile((y - b.y.mid()) / (0.5 * b.y.width()));
}

// Unit-mass version of box_bump.
inline double box_bump_density(const Box& b, double x, double y) {
  const double M = bump_profile_mass();
  return box_bump(b, x, y) / (M * M * 0.25 * b.x.width() * b.y.width());
}

// ---------------------------------------------------------------------------
// Panel grids.

// Composite Gauss-Legendre nodes on [lo, hi] with panel edges at the given
// breakpoints, plus Lagrange basis values and running integrals per panel.
// Stretch of an axis that needs panels no wider than hmax.
struct Refinement {
  Interval range;
  double hmax;
};

class PanelAxis {
 public:
  static constexpr int kMaxOrder = 64;

  PanelAxis() = default;
  PanelAxis(double lo, double hi, std::vector<double> breaks, double hmax, const std::vector<Refinement>& refine,
            int order, int interval_panels = 1)
      : order_(order) {
    if (!(lo < hi)) throw CohomologyError("panel axis: empty interval");
    if (order < 2 || order > kMaxOrder) throw CohomologyError("panel axis: order must be in 2..64");
    const GaussRule& rule = gauss_rule(order);
    z_ = rule.nodes;
    wz_ = rule.weights;
    bary_.resize(order);
    for (int i = 0; i < order; ++i) {
      double p = 1.0;
      for (int j = 0; j < order; ++j)
        if (j != i) p *= z_[i] - z_[j];
      bary_[i] = 1.0 / p;
    }

    const double eps = 1e-9 * (hi - lo);
    std::vector<double> pts{lo, hi};
    for (double b : breaks)
      if (b > lo + eps && b < hi - eps) pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    std::vector<double> uniq;
    for (double p : pts)
      if (uniq.empty() || p - uniq.back() > eps) uniq.push_back(p);
    uniq.back() = hi;

    edges_.push_back(lo);
    for (std::size_t s = 0; s + 1 < uniq.size(); ++s) {
      const double a = uniq[s], b = uniq[s + 1], mid = 0.5 * (a + b);
      double h = hmax;
      for (const auto& r : refine)
        if (mid > r.range.lo && mid < r.range.hi) h = std::min(h, r.hmax);
      int n = std::max(interval_panels, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
      for (int k = 1; k <= n; ++k) edges_.push_back(k == n ? b : a + (b - a) * k / n);
    }
    for (std::size_t p = 0; p + 1 < edges_.size(); ++p) {
      const double a = edges_[p], b = edges_[p + 1];
      for (int i = 0; i < order; ++i) {
        nodes_.push_back(0.5 * (a + b) + 0.5 * (b - a) * z_[i]);
        weights_.push_back(0.5 * (b - a) * wz_[i]);
      }
    }
  }

  int order() const { return order_; }
  int panels() const { return static_cast<int>(edges_.size()) - 1; }
  int size() const { return static_cast<int>(nodes_.size()); }
  double lo() const { return edges_.front(); }
  double hi() const { return edges_.back(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& edges() const { return edges_; }

  // Panel containing x; x is clamped to [lo, hi].
  int locate(double x) const {
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    int p = static_cast<int>(it - edges_.begin()) - 1;
    return std::clamp(p, 0, panels() - 1);
  }

  // l[i] = i-th Lagrange basis polynomial of panel p at x;
  // c[i] = its integral from the panel's left edge to x.
  void basis(int p, double x, double* l, double* c) const {
    const double a = edges_[p], b = edges_[p + 1];
    const double u = std::clamp(2.0 * (x - a) / (b - a) - 1.0, -1.0, 1.0);
    reference_basis(u, l);
    if (!c) return;
    std::fill(c, c + order_, 0.0);
    double tmp[kMaxOrder];
    const double half = 0.5 * (u + 1.0);
    for (int k = 0; k < order_; ++k) {
      const double v = -1.0 + half * (z_[k] + 1.0);
      reference_basis(v, tmp);
      const double w = half * wz_[k] * 0.5 * (b - a);
      for (int i = 0; i < order_; ++i) c[i] += w * tmp[i];
    }
  }

 private:
  void reference_basis(double u, double* l) const {
    for (int i = 0; i < order_; ++i)
      if (u == z_[i]) {
        std::fill(l, l + order_, 0.0);
        l[i] = 1.0;
        return;
      }
    double sum = 0.0;
    for (int i = 0; i < order_; ++i) {
      l[i] = bary_[i] / (u - z_[i]);
      sum += l[i];
    }
    for (int i = 0; i < order_; ++i) l[i] /= sum;
  }

  int order_ = 0;
  std::vector<double> z_, wz_, bary_;
  std::vector<double> edges_, nodes_, weights_;
};

// ---------------------------------------------------------------------------
// Compactly supported primitive on one box.
//
// With f of zero mass on the cell, F(y) = int f dx, g(y) = int_{y0}^{y} F,
// e a unit-mass bump in x and E its running integral:
//   eta = -e(x) g(y) dx + (int_{x0}^{x} f du - E(x) F(y)) dy,   d(eta) = f dx^dy.

class CompactPrimitive {
 public:
  CompactPrimitive() = default;

  // `values` holds f at the grid nodes, x-major: values[ix * ny + iy].
  CompactPrimitive(const Box& cell, PanelAxis ax, PanelAxis ay, std::vector<double> values, double tol_mass)
      : cell_(cell), ax_(std::move(ax)), ay_(std::move(ay)), f_(std::move(values)) {
    const int nx = ax_.size(), ny = ay_.size(), n = ax_.order();
    if (static_cast<int>(f_.size()) != nx * ny) throw CohomologyError("primitive: grid size mismatch");
    zero_ = std::all_of(f_.begin(), f_.end(), [](double v) { return v == 0.0; });
    if (zero_) return;

    Fy_.assign(ny, 0.0);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) Fy_[iy] += ax_.weights()[ix] * f_[ix * ny + iy];
    mass_ = 0.0;
    for (int iy = 0; iy < ny; ++iy) mass_ += ay_.weights()[iy] * Fy_[iy];
    if (!(std::abs(mass_) < tol_mass))
      throw NonzeroMass("2-form has mass " + std::to_string(mass_) + " on the cell " + to_string(cell), mass_);

    cumx_.assign(static_cast<std::size_t>(ax_.panels()) * ny, 0.0);
    for (int p = 1; p < ax_.panels(); ++p)
      for (int iy = 0; iy < ny; ++iy) {
        double s = cumx_[(p - 1) * ny + iy];
        for (int i = 0; i < n; ++i) {
          int ix = (p - 1) * n + i;
          s += ax_.weights()[ix] * f_[ix * ny + iy];
        }
        cumx_[p * ny + iy] = s;
      }
    cumg_.assign(ay_.panels(), 0.0);
    for (int q = 1; q < ay_.panels(); ++q) {
      double s = cumg_[q - 1];
      for (int m = 0; m < n; ++m) s += ay_.weights()[(q - 1) * n + m] * Fy_[(q - 1) * n + m];
      cumg_[q] = s;
    }
    e_.resize(nx);
    double emass = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      e_[ix] = bump_profile((ax_.nodes()[ix] - cell.x.mid()) / (0.5 * cell.x.width()));
      emass += ax_.weights()[ix] * e_[ix];
    }
    for (double& v : e_) v /= emass;
    cume_.assign(ax_.panels(), 0.0);
    for (int p = 1; p < ax_.panels(); ++p) {
      double s = cume_[p - 1];
      for (int i = 0; i < n; ++i) s += ax_.weights()[(p - 1) * n + i] * e_[(p - 1) * n + i];
      cume_[p] = s;
    }
  }

  const Box& cell() const { return cell_; }
  bool is_zero() const { return zero_; }
  double mass() const { return mass_; }
  int nodes() const { return ax_.size() * ay_.size(); }

  // (eta_x, eta_y); zero outside the open cell.
  std::array<double, 2> operator()(double x, double y) const {
    if (zero_ || !cell_.contains(x, y)) return {0.0, 0.0};
    return evaluate(x, y);
  }

  // The interpolating formula with coordinates clamped to the closed cell;
  // used to confirm that eta vanishes on the cell boundary.
  std::array<double, 2> evaluate(double x, double y) const {
    if (zero_) return {0.0, 0.0};
    const int n = ax_.order(), ny = ay_.size();
    const int p = ax_.locate(x), q = ay_.locate(y);
    double lx[PanelAxis::kMaxOrder], cx[PanelAxis::kMaxOrder], ly[PanelAxis::kMaxOrder], cy[PanelAxis::kMaxOrder];
    ax_.basis(p, x, lx, cx);
    ay_.basis(q, y, ly, cy);
    double intf = 0.0, Fi = 0.0, g = cumg_[q];
    for (int m = 0; m < n; ++m) {
      const int iy = q * n + m;
      double I = cumx_[p * ny + iy];
      for (int i = 0; i < n; ++i) I += cx[i] * f_[(p * n + i) * ny + iy];
      intf += ly[m] * I;
      Fi += ly[m] * Fy_[iy];
      g += cy[m] * Fy_[iy];
    }
    double E = cume_[p], e = 0.0;
    for (int i = 0; i < n; ++i) {
      E += cx[i] * e_[p * n + i];
      e += lx[i] * e_[p * n + i];
    }
    return {-e * g, intf - E * Fi};
  }

 private:
  Box cell_;
  PanelAxis ax_, ay_;
  std::vector<double> f_, Fy_, cumx_, cumg_, e_, cume_;
  double mass_ = 0.0;
  bool zero_ = true;
};

struct PoincareOptions {
  int order = 16;
  int min_panels = 24;
  double tol_mass = 1e-8;
  double support_tol = 1e-10;
  int boundary_samples = 64;
  std::vector<double> x_breaks, y_breaks;
  std::vector<Box> refine;  // regions needing finer panels, e.g. supports of narrow bumps
  int refine_panels = 4;    // panels across each refined region
  double edge_fraction = 0.1;  // strips along the cell edges, where cut-offs flatten out
  int edge_panels = 4;
  int interval_panels = 1;  // minimum panels between consecutive breakpoints
};

namespace detail {

inline std::pair<PanelAxis, PanelAxis> cell_axes(const Box& cell, const PoincareOptions& o) {
  std::vector<Refinement> rx, ry;
  std::vector<double> bx = o.x_breaks, by = o.y_breaks;
  if (o.edge_fraction > 0.0) {
    const double ex = o.edge_fraction * cell.x.width(), ey = o.edge_fraction * cell.y.width();
    rx.push_back({{cell.x.lo, cell.x.lo + ex}, ex / o.edge_panels});
    rx.push_back({{cell.x.hi - ex, cell.x.hi}, ex / o.edge_panels});
    ry.push_back({{cell.y.lo, cell.y.lo + ey}, ey / o.edge_panels});
    ry.push_back({{cell.y.hi - ey, cell.y.hi}, ey / o.edge_panels});
    bx.insert(bx.end(), {cell.x.lo + ex, cell.x.hi - ex});
    by.insert(by.end(), {cell.y.lo + ey, cell.y.hi - ey});
  }
  for (const Box& r : o.refine) {
    rx.push_back({r.x, r.x.width() / o.refine_panels});
    ry.push_back({r.y, r.y.width() / o.refine_panels});
    bx.insert(bx.end(), {r.x.lo, r.x.hi});
    by.insert(by.end(), {r.y.lo, r.y.hi});
  }
  return {PanelAxis(cell.x.lo, cell.x.hi, bx, cell.x.width() / o.min_panels, rx, o.order, o.interval_panels),
          PanelAxis(cell.y.lo, cell.y.hi, by, cell.y.width() / o.min_panels, ry, o.order, o.interval_panels)};
}

template <class F>
double boundary_max(F&& f, const Box& cell, int n) {
  double m = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double sx = cell.x.lo + cell.x.width() * k / n, sy = cell.y.lo + cell.y.width() * k / n;
    m = std::max({m, std::abs(f(sx, cell.y.lo)), std::abs(f(sx, cell.y.hi)), std::abs(f(cell.x.lo, sy)),
                  std::abs(f(cell.x.hi, sy))});
  }
  return m;
}

}  // namespace detail

// Primitive of f dx^dy with support in `cell`; f must vanish on the boundary
// and have zero mass.
inline CompactPrimitive compact_poincare(const std::function<double(double, double)>& f, const Box& cell,
                                         const PoincareOptions& o = {}) {
  if (!cell.bounded() || cell.empty()) throw CohomologyError("compact_poincare: cell must be a bounded box");
  double bmax = detail::boundary_max(f, cell, o.boundary_samples);
  if (!(bmax < o.support_tol))
    throw SupportError("2-form does not vanish on the boundary of " + to_string(cell) + ": " + std::to_string(bmax));
  auto [ax, ay] = detail::cell_axes(cell, o);
  std::vector<double> v(static_cast<std::size_t>(ax.size()) * ay.size());
  for (int ix = 0; ix < ax.size(); ++ix)
    for (int iy = 0; iy < ay.size(); ++iy) v[ix * ay.size() + iy] = f(ax.nodes()[ix], ay.nodes()[iy]);
  return CompactPrimitive(cell, std::move(ax), std::move(ay), std::move(v), o.tol_mass);
}

// ---------------------------------------------------------------------------
// Covers.

struct CoverCell {
  std::string chart;
  Box box;
  std::optional<int> successor;
};

// `end` marks where a truncated cover stops (for example around a puncture);
// points inside it are not part of the covered region.
struct CoverSpec {
  std::vector<CoverCell> cells;
  std::optional<CoverCell> end;
};

struct CohomologyOptions {
  int order = 16;
  int min_panels = 12;
  int theta_panels = 16;
  int interval_panels = 1;
  int edge_panels = 4;
  double tol_mass = 1e-8;
  double tol_obstruction = 1e-6;
  double support_tol = 1e-10;
  int overlap_grid = 49;
  double theta_shrink = 0.8;
  bool diagnose_obstruction = true;
};

class CoveredSurface {
 public:
  static constexpr int kEnd = -1;

  CoveredSurface(Atlas atlas, CoverSpec spec, const CohomologyOptions& opts = {})
      : atlas_(std::move(atlas)), spec_(std::move(spec)), opts_(opts) {
    const int n = static_cast<int>(spec_.cells.size());
    if (n == 0) throw CohomologyError("cover has no cells");
    for (const auto& c : atlas_.charts()) chart_names_.push_back(c.name);
    auto check_cell = [&](const CoverCell& c, const std::string& what) {
      const Chart* ch = atlas_.find_chart(c.chart);
      if (!ch) throw CohomologyError(what + " references unknown chart " + c.chart);
      if (!c.box.bounded() || c.box.empty()) throw CohomologyError(what + " must be a bounded nonempty box");
      const Box& d = ch->domain;
      if (!(c.box.x.lo > d.x.lo && c.box.x.hi < d.x.hi && c.box.y.lo > d.y.lo && c.box.y.hi < d.y.hi))
        throw CohomologyError(what + " " + to_string(c.box) + " is not compactly contained in chart " + c.chart);
    };
    for (int j = 0; j < n; ++j) check_cell(spec_.cells[j], "cover cell " + std::to_string(j));
    if (spec_.end) check_cell(*spec_.end, "cover end region");

    successor_.resize(n);
    theta_.resize(n);
    for (int j = 0; j < n; ++j) {
      if (j == n - 1) {
        if (spec_.cells[j].successor)
          throw CohomologyError("the last cover cell cannot have a successor");
        successor_[j] = spec_.end ? kEnd : n;  // n: nowhere
        if (spec_.end) theta_[j] = find_theta_box(spec_.cells[j], *spec_.end, j, "end region");
        continue;
      }
      int k = spec_.cells[j].successor.value_or(j + 1);
      if (k <= j || k >= n)
        throw CohomologyError("cover cell " + std::to_string(j) + ": successor " + std::to_string(k) +
                              " must come later in the chain");
      successor_[j] = k;
      theta_[j] = find_theta_box(spec_.cells[j], spec_.cells[k], j, "cell " + std::to_string(k));
    }
  }

  const Atlas& atlas() const { return atlas_; }
  const CoverSpec& spec() const { return spec_; }
  const CohomologyOptions& options() const { return opts_; }
  int size() const { return static_cast<int>(spec_.cells.size()); }
  const CoverCell& cell(int j) const { return spec_.cells.at(j); }
  // Successor index, kEnd for the end region, or size() when there is none.
  int successor(int j) const { return successor_.at(j); }
  bool has_end() const { return spec_.end.has_value(); }
  // Support box of theta_j in the chart of cell j; empty for a last cell without end.
  const std::optional<Box>& theta_box(int j) const { return theta_.at(j); }

  // Coordinates of a point of `chart` in every chart of the atlas.
  std::map<std::string, std::optional<std::array<double, 2>>> positions(const std::string& chart, double x,
                                                                        double y) const {
    std::map<std::string, std::optional<std::array<double, 2>>> out;
    for (const auto& name : chart_names_) out[name] = atlas_.map_point(chart, name, x, y);
    return out;
  }

  struct Bumps {
    std::vector<double> cells;
    double end = 0.0;
    double total() const {
      double s = end;
      for (double b : cells) s += b;
      return s;
    }
  };

  Bumps bumps(const std::string& chart, double x, double y) const {
    auto pos = positions(chart, x, y);
    Bumps b;
    b.cells.resize(size());
    auto at = [&](const CoverCell& c) {
      const auto& q = pos.at(c.chart);
      return q && c.box.contains((*q)[0], (*q)[1]) ? box_bump(c.box, (*q)[0], (*q)[1]) : 0.0;
    };
    for (int j = 0; j < size(); ++j) b.cells[j] = at(spec_.cells[j]);
    if (spec_.end) b.end = at(*spec_.end);
    return b;
  }

  double psi(int j, const std::string& chart, double x, double y) const {
    Bumps b = bumps(chart, x, y);
    double t = b.total();
    return t > 0.0 ? b.cells[j] / t : 0.0;
  }

  // Inside some cell and outside the end region.
  bool covered(const std::string& chart, double x, double y) const {
    Bumps b = bumps(chart, x, y);
    return b.end == 0.0 && b.total() > 0.0;
  }

  // Coefficient of the unit-mass bump theta_j (before grid normalization) in
  // the coordinates of `chart`.
  double theta_raw(int j, const std::string& chart, double x, double y) const {
    const auto& tb = theta_.at(j);
    if (!tb) return 0.0;
    const std::string& own = spec_.cells[j].chart;
    auto q = atlas_.map_point(chart, own, x, y);
    if (!q || !tb->contains((*q)[0], (*q)[1])) return 0.0;
    return box_bump_density(*tb, (*q)[0], (*q)[1]) * atlas_.jacobian_det(chart, own, x, y);
  }

 private:
  // Largest grid rectangle of V_j whose points lie in the target box, shrunk
  // and then validated on a finer grid.
  Box find_theta_box(const CoverCell& c, const CoverCell& target, int j, const std::string& what) const {
    const int G = opts_.overlap_grid;
    auto inside = [&](double x, double y) {
      auto q = atlas_.map_point(c.chart, target.chart, x, y);
      return q && target.box.contains((*q)[0], (*q)[1]);
    };
    auto gx = [&](int a) { return c.box.x.lo + (a + 0.5) * c.box.x.width() / G; };
    auto gy = [&](int b) { return c.box.y.lo + (b + 0.5) * c.box.y.width() / G; };
    std::vector<int> height(G, 0);
    int best = 0;
    Box bestbox;
    for (int b = 0; b < G; ++b) {
      for (int a = 0; a < G; ++a) height[a] = inside(gx(a), gy(b)) ? height[a] + 1 : 0;
      // Largest rectangle in the histogram of column heights.
      std::vector<int> stack;
      for (int a = 0; a <= G; ++a) {
        int h = a < G ? height[a] : 0;
        while (!stack.empty() && height[stack.back()] >= h) {
          int top = stack.back();
          stack.pop_back();
          int left = stack.empty() ? 0 : stack.back() + 1;
          int width = a - left, ht = height[top];
          if (width >= 2 && ht >= 2 && width * ht > best) {
            best = width * ht;
            bestbox = {{gx(left), gx(a - 1)}, {gy(b - ht + 1), gy(b)}};
          }
        }
        stack.push_back(a);
      }
    }
    if (best == 0)
      throw CohomologyError("cover cell " + std::to_string(j) + " does not overlap " + what +
                            "; set an explicit successor");
    Box t = bestbox.shrunk(opts_.theta_shrink);
    for (int attempt = 0; attempt < 4; ++attempt) {
      bool ok = true;
      const int V = 20;
      for (int a = 0; a <= V && ok; ++a)
        for (int b = 0; b <= V && ok; ++b) {
          double x = t.x.lo + t.x.width() * a / V, y = t.y.lo + t.y.width() * b / V;
          ok = inside(x, y);
        }
      if (ok) return t;
      t = t.shrunk(0.5);
    }
    throw CohomologyError("could not place a transfer bump in the overlap of cell " + std::to_string(j) + " and " +
                          what);
  }

  Atlas atlas_;
  CoverSpec spec_;
  CohomologyOptions opts_;
  std::vector<std::string> chart_names_;
  std::vector<int> successor_;
  std::vector<std::optional<Box>> theta_;
};

// ---------------------------------------------------------------------------
// Chained solver.

// Coefficient of dx^dy of a position 2-form in one chart.
using PositionField = std::function<double(double, double)>;
using OmegaFamily = std::map<std::string, PositionField>;

struct CellReport {
  int index = 0;
  std::string chart;
  Box box;
  int successor = 0;
  std::optional<Box> theta_box;
  double incoming = 0.0;  // sum of c_i over cells handing mass to this one
  double mass = 0.0;      // c_j
  double residual_mass = 0.0;
  double theta_scale = 1.0;  // grid normalization of theta_j
  int nodes = 0;
};

class ExactnessSolution {
 public:
  ExactnessSolution(std::shared_ptr<const CoveredSurface> surface, OmegaFamily omega,
                    std::vector<CompactPrimitive> primitives, std::vector<CellReport> cells, double c_last)
      : surface_(std::move(surface)),
        omega_(std::move(omega)),
        primitives_(std::move(primitives)),
        cells_(std::move(cells)),
        c_last_(c_last) {}

  const CoveredSurface& surface() const { return *surface_; }
  const std::vector<CellReport>& cells() const { return cells_; }
  const std::vector<CompactPrimitive>& primitives() const { return primitives_; }
  double c_last() const { return c_last_; }

  // Right-hand side solved in cell j, psi_j omega + sum_{K(i)=j} c_i theta_i - c_j theta_j,
  // at a point of the cell's chart.
  double source(int j, double x, double y) const {
    const CoveredSurface& s = *surface_;
    const std::string& chart = s.cell(j).chart;
    auto b = s.bumps(chart, x, y);
    const double t = b.total();
    double v = t > 0.0 && b.cells[j] > 0.0 ? b.cells[j] / t * omega_.at(chart)(x, y) : 0.0;
    for (int i = 0; i < j; ++i)
      if (s.successor(i) == j) v += cells_[i].mass * cells_[i].theta_scale * s.theta_raw(i, chart, x, y);
    if (s.theta_box(j)) v -= cells_[j].mass * cells_[j].theta_scale * s.theta_raw(j, chart, x, y);
    return v;
  }

  // (eta_x, eta_y) at a point of `chart`, summed over cells.
  std::array<double, 2> eta(const std::string& chart, double x, double y) const {
    std::array<double, 2> out{0.0, 0.0};
    const Atlas& atlas = surface_->atlas();
    std::map<std::string, std::optional<std::array<double, 2>>> pos;
    for (int j = 0; j < surface_->size(); ++j) {
      if (primitives_[j].is_zero()) continue;
      const std::string& own = surface_->cell(j).chart;
      auto it = pos.find(own);
      if (it == pos.end()) it = pos.emplace(own, atlas.map_point(chart, own, x, y)).first;
      const auto& q = it->second;
      if (!q || !surface_->cell(j).box.contains((*q)[0], (*q)[1])) continue;
      auto e = primitives_[j]((*q)[0], (*q)[1]);
      if (own == chart) {
        out[0] += e[0];
        out[1] += e[1];
        continue;
      }
      // Pullback of a 1-form: eta_A = J^T eta_own, J = d(own)/d(chart).
      auto J = atlas.transition(chart, own)->position_jacobian(x, y);
      out[0] += e[0] * J[0] + e[1] * J[2];
      out[1] += e[0] * J[1] + e[1] * J[3];
    }
    return out;
  }

  // eta as a 1-form field on jets of `chart`.
  FormField eta_field(const std::string& chart) const {
    auto self = std::make_shared<const ExactnessSolution>(*this);
    return {1, kPositionCoords, [self, chart](const JetPoint& p) {
              FormValues v;
              v.degree = 1;
              auto e = self->eta(chart, p.x(), p.y());
              v.c[bit(FormCoord::x)] = e[0];
              v.c[bit(FormCoord::y)] = e[1];
              return v;
            }};
  }

 private:
  std::shared_ptr<const CoveredSurface> surface_;
  OmegaFamily omega_;
  std::vector<CompactPrimitive> primitives_;
  std::vector<CellReport> cells_;
  double c_last_ = 0.0;
};

namespace detail {

// Image of a box under a transition, from its corners; empty when a corner
// has no image. Boxes here never straddle a guard seam.
inline std::optional<Box> map_box(const Atlas& atlas, const std::string& from, const std::string& to, const Box& b) {
  if (from == to) return b;
  const double fx = 1e-9 * b.x.width(), fy = 1e-9 * b.y.width();
  Box out{{INFINITY, -INFINITY}, {INFINITY, -INFINITY}};
  for (double x : {b.x.lo + fx, b.x.hi - fx})
    for (double y : {b.y.lo + fy, b.y.hi - fy}) {
      auto q = atlas.map_point(from, to, x, y);
      if (!q) return std::nullopt;
      out.x = {std::min(out.x.lo, (*q)[0]), std::max(out.x.hi, (*q)[0])};
      out.y = {std::min(out.y.lo, (*q)[1]), std::max(out.y.hi, (*q)[1])};
    }
  return out;
}

// Panel breakpoints in cell j: edges of other cells, of theta boxes and of the
// end region, mapped into the chart of cell j. Edges that miss the cell are
// skipped since the integrand is smooth across them.
inline std::pair<std::vector<double>, std::vector<double>> cell_breaks(const CoveredSurface& s, int j) {
  const CoverCell& me = s.cell(j);
  std::vector<double> bx, by;
  // Only edges that stay axis-parallel in the cell's chart give breakpoints.
  auto add_point = [&](const std::string& chart, double x, double y, bool vertical) {
    auto q = s.atlas().map_point(chart, me.chart, x, y);
    if (!q || !me.box.contains((*q)[0], (*q)[1])) return;
    std::array<double, 4> J{1, 0, 0, 1};
    if (chart != me.chart) J = s.atlas().transition(chart, me.chart)->position_jacobian(x, y);
    // Along a vertical edge only y moves: the image is vertical when J[1] == 0.
    const double along_x = vertical ? J[1] : J[0], along_y = vertical ? J[3] : J[2];
    if (std::abs(along_x) < 1e-12) bx.push_back((*q)[0]);
    else if (std::abs(along_y) < 1e-12) by.push_back((*q)[1]);
  };
  auto add_box = [&](const std::string& chart, const Box& b) {
    const double fx = 1e-9 * b.x.width(), fy = 1e-9 * b.y.width();
    for (int k = 0; k <= 16; ++k) {
      const double sx = b.x.lo + fx + (b.x.width() - 2 * fx) * k / 16;
      const double sy = b.y.lo + fy + (b.y.width() - 2 * fy) * k / 16;
      add_point(chart, b.x.lo + fx, sy, true);
      add_point(chart, b.x.hi - fx, sy, true);
      add_point(chart, sx, b.y.lo + fy, false);
      add_point(chart, sx, b.y.hi - fy, false);
    }
  };
  for (int k = 0; k < s.size(); ++k) {
    if (k != j) add_box(s.cell(k).chart, s.cell(k).box);
    if (s.theta_box(k) && k != j) add_box(s.cell(k).chart, *s.theta_box(k));
  }
  if (s.spec().end) add_box(s.spec().end->chart, s.spec().end->box);
  return {bx, by};
}

}  // namespace detail

inline ExactnessSolution solve_exactness(std::shared_ptr<const CoveredSurface> surface, const OmegaFamily& omega) {
  const CoveredSurface& s = *surface;
  const CohomologyOptions& o = s.options();
  const int n = s.size();
  for (int j = 0; j < n; ++j)
    if (!omega.count(s.cell(j).chart))
      throw CohomologyError("no 2-form given in chart " + s.cell(j).chart);

  std::vector<double> c(n, 0.0), theta_scale(n, 1.0);
  std::vector<CompactPrimitive> prims(n);
  std::vector<CellReport> reports(n);
  for (int j = 0; j < n; ++j) {
    const CoverCell& cell = s.cell(j);
    PoincareOptions po;
    po.order = o.order;
    po.min_panels = o.min_panels;
    po.refine_panels = o.theta_panels;
    po.interval_panels = o.interval_panels;
    po.edge_panels = o.edge_panels;
    std::tie(po.x_breaks, po.y_breaks) = detail::cell_breaks(s, j);

    std::vector<int> senders;
    for (int i = 0; i < j; ++i)
      if (s.successor(i) == j) senders.push_back(i);
    // Every theta bump in the source of cell j gets fine panels.
    if (s.theta_box(j)) po.refine.push_back(*s.theta_box(j));
    for (int i : senders)
      if (auto b = detail::map_box(s.atlas(), s.cell(i).chart, cell.chart, *s.theta_box(i))) po.refine.push_back(*b);
    auto [ax, ay] = detail::cell_axes(cell.box, po);

    const PositionField& w = omega.at(cell.chart);
    const int nx = ax.size(), ny = ay.size();
    std::vector<double> g(static_cast<std::size_t>(nx) * ny), th(g.size(), 0.0);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) {
        const double x = ax.nodes()[ix], y = ay.nodes()[iy];
        auto b = s.bumps(cell.chart, x, y);
        double t = b.total();
        double v = t > 0.0 && b.cells[j] > 0.0 ? b.cells[j] / t * w(x, y) : 0.0;
        for (int i : senders) v += c[i] * theta_scale[i] * s.theta_raw(i, cell.chart, x, y);
        g[ix * ny + iy] = v;
        if (s.theta_box(j)) th[ix * ny + iy] = s.theta_raw(j, cell.chart, x, y);
      }
    double mass = 0.0, tmass = 0.0;
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) {
        const double wgt = ax.weights()[ix] * ay.weights()[iy];
        mass += wgt * g[ix * ny + iy];
        tmass += wgt * th[ix * ny + iy];
      }
    c[j] = mass;
    CellReport& r = reports[j];
    r.index = j;
    r.chart = cell.chart;
    r.box = cell.box;
    r.successor = s.successor(j);
    r.theta_box = s.theta_box(j);
    for (int i : senders) r.incoming += c[i];
    r.mass = mass;
    r.nodes = nx * ny;

    const bool last_without_end = !s.theta_box(j);
    if (!last_without_end) {
      theta_scale[j] = 1.0 / tmass;
      r.theta_scale = theta_scale[j];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] -= mass * theta_scale[j] * th[k];
    }
    double residual = 0.0;
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy) residual += ax.weights()[ix] * ay.weights()[iy] * g[ix * ny + iy];
    r.residual_mass = residual;
    if (last_without_end && !(std::abs(mass) < o.tol_obstruction)) {
      double enlarged = mass;
      bool topological = true;
      if (o.diagnose_obstruction) {
        CoverSpec bigger = s.spec();
        CoverCell& lc = bigger.cells.back();
        const Box& d = s.atlas().chart(lc.chart).domain;
        Box e = lc.box.shrunk(1.2);
        auto fit = [](Interval v, Interval dom) {
          const double m = 1e-3 * v.width();
          return Interval{std::max(v.lo, dom.lo + m), std::min(v.hi, dom.hi - m)};
        };
        lc.box = {fit(e.x, d.x.clipped(1e6)), fit(e.y, d.y.clipped(1e6))};
        CohomologyOptions no = o;
        no.diagnose_obstruction = false;
        try {
          solve_exactness(std::make_shared<const CoveredSurface>(s.atlas(), bigger, no), omega);
          enlarged = 0.0;
        } catch (const Obstruction& ob) {
          enlarged = ob.c_last();
        } catch (const CohomologyError&) {
          // The enlarged cover is not admissible; no evidence either way.
        }
        topological = std::abs(enlarged) > 0.5 * std::abs(mass);
      }
      throw Obstruction("mass " + std::to_string(mass) + " is left in the last cover cell" +
                            (topological ? "; enlarging the cell does not reduce it, so the 2-form is not exact "
                                           "(nonzero total integral)"
                                         : "; enlarging the cell reduces it, so the cover is truncated too early"),
                        c, mass, enlarged, topological);
    }
    prims[j] = CompactPrimitive(cell.box, std::move(ax), std::move(ay), std::move(g),
                                last_without_end ? o.tol_obstruction : o.tol_mass);
  }
  return ExactnessSolution(std::move(surface), omega, std::move(prims), std::move(reports), c[n - 1]);
}

// ---------------------------------------------------------------------------
// Certification.

struct ExactnessCheck {
  double max_residual = 0.0;       // |d(eta) - omega| at covered samples
  double partition_error = 0.0;    // |sum psi_j - 1| at covered samples
  double boundary_max = 0.0;       // |eta_j| on the boundary of V_j
  int samples = 0;
  std::string worst_chart;
  std::array<double, 2> worst{0.0, 0.0};
};

// Covered sample points of a chart with a finite-difference stencil that
// stays inside the chart and the covered region.
inline ExactnessCheck check_exactness(const ExactnessSolution& sol, const OmegaFamily& omega, int samples_per_chart,
                                      std::uint64_t seed, double step = 1e-4, double position_limit = 10.0) {
  ExactnessCheck r;
  const CoveredSurface& s = sol.surface();
  Sampler smp(seed);
  for (const auto& chart : s.atlas().charts()) {
    auto w = omega.find(chart.name);
    if (w == omega.end()) continue;
    const Box dom = chart.domain.clipped(position_limit);
    int got = 0, attempts = 0;
    while (got < samples_per_chart && attempts++ < 200 * samples_per_chart) {
      const double x = smp.uniform(dom.x.lo, dom.x.hi), y = smp.uniform(dom.y.lo, dom.y.hi);
      const double h = step;
      bool ok = true;
      for (double dx : {-2 * h, 0.0, 2 * h})
        for (double dy : {-2 * h, 0.0, 2 * h})
          ok = ok && chart.domain.contains(x + dx, y + dy) && s.covered(chart.name, x + dx, y + dy);
      if (!ok) continue;
      auto ex = [&](double px, double py) { return sol.eta(chart.name, px, py); };
      const double dyeta = (-ex(x + 2 * h, y)[1] + 8 * ex(x + h, y)[1] - 8 * ex(x - h, y)[1] + ex(x - 2 * h, y)[1]) /
                           (12 * h);
      const double dxeta = (-ex(x, y + 2 * h)[0] + 8 * ex(x, y + h)[0] - 8 * ex(x, y - h)[0] + ex(x, y - 2 * h)[0]) /
                           (12 * h);
      const double res = std::abs(dyeta - dxeta - w->second(x, y));
      if (!(res <= r.max_residual)) {
        r.max_residual = std::isnan(res) ? INFINITY : res;
        r.worst_chart = chart.name;
        r.worst = {x, y};
      }
      auto b = s.bumps(chart.name, x, y);
      double sum = 0.0, t = b.total();
      for (double v : b.cells) sum += v / t;
      r.partition_error = std::max(r.partition_error, std::abs(sum - 1.0));
      ++r.samples;
      ++got;
    }
  }
  for (int j = 0; j < s.size(); ++j) {
    const auto& p = sol.primitives()[j];
    r.boundary_max = std::max(r.boundary_max, detail::boundary_max(
                                                  [&](double x, double y) {
                                                    auto e = p.evaluate(x, y);
                                                    return std::max(std::abs(e[0]), std::abs(e[1]));
                                                  },
                                                  s.cell(j).box, 50));
  }
  return r;
}

}  // namespace globlag
