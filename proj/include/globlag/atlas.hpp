#pragma once

// Charts with box domains, piecewise transition maps, their jet prolongations,
// and overlap checks for per-chart data.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "globlag/expr.hpp"
#include "globlag/jet.hpp"
#include "globlag/sampling.hpp"

namespace globlag {

class AtlasError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A point lies in no guard region, or in more than one.
class GuardError : public AtlasError {
 public:
  using AtlasError::AtlasError;
};

struct Chart {
  std::string name;
  std::array<std::string, 2> coords;
  Box domain;
};

// Expressions are in the canonical variables x, y of the source chart. A piece
// is active where all of its guards are strictly positive.
struct TransitionPiece {
  std::vector<Expression> guards;
  Expression x, y;
};

struct TransitionMap {
  std::string from, to;
  std::vector<TransitionPiece> pieces;
  Box sample_box;
};

using Matrix5 = std::array<std::array<double, kFormCoords>, kFormCoords>;

// Prolongation of a transition map to second jets.
class JetMap {
 public:
  JetMap() = default;

  explicit JetMap(const TransitionMap& t) : from_(t.from), to_(t.to), sample_box_(t.sample_box) {
    if (t.pieces.empty()) throw AtlasError("transition " + t.from + " -> " + t.to + " has no pieces");
    for (const auto& piece : t.pieces) {
      for (const Expression& e : piece.guards) check_position_only(e, "guard");
      check_position_only(piece.x, "map");
      check_position_only(piece.y, "map");
      Compiled c;
      for (const Expression& g : piece.guards) c.guards.emplace_back(g);
      std::array<Expression, 6> comp;
      comp[0] = piece.x;
      comp[1] = piece.y;
      for (int k = 2; k < 6; ++k) comp[k] = total_derivative(comp[k - 2]);
      for (int k = 0; k < 6; ++k) c.components[k] = JetFunction(comp[k]);
      // Rows: xbar, ybar, xbar_d, ybar_d; columns: x, y, xd, yd.
      for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 4; ++col)
          c.jacobian[r][col] = JetFunction(differentiate(comp[r], kFormCoordNames[col + 1]));
      pieces_.push_back(std::move(c));
    }
  }

  const std::string& from() const { return from_; }
  const std::string& to() const { return to_; }
  const Box& sample_box() const { return sample_box_; }
  std::size_t piece_count() const { return pieces_.size(); }

  std::optional<int> try_select(double x, double y) const {
    std::array<double, kJetSlots> v{};
    v[1] = x;
    v[2] = y;
    std::optional<int> found;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      bool active = true;
      for (const auto& g : pieces_[i].guards)
        if (!(g(v.data()) > 0.0)) {
          active = false;
          break;
        }
      if (!active) continue;
      if (found)
        throw GuardError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                         ") lies in more than one guard region of " + from_ + " -> " + to_);
      found = static_cast<int>(i);
    }
    return found;
  }

  int select(double x, double y) const {
    auto i = try_select(x, y);
    if (!i)
      throw GuardError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                       ") lies outside every guard region of " + from_ + " -> " + to_);
    return *i;
  }

  std::array<double, 2> map_position(double x, double y) const {
    const Compiled& c = pieces_[select(x, y)];
    std::array<double, kJetSlots> v{};
    v[1] = x;
    v[2] = y;
    return {c.components[0](v.data()), c.components[1](v.data())};
  }

  // Jacobian d(xbar, ybar)/d(x, y), row-major.
  std::array<double, 4> position_jacobian(double x, double y) const {
    const Compiled& c = pieces_[select(x, y)];
    std::array<double, kJetSlots> v{};
    v[1] = x;
    v[2] = y;
    return {c.jacobian[0][0](v.data()), c.jacobian[0][1](v.data()), c.jacobian[1][0](v.data()),
            c.jacobian[1][1](v.data())};
  }

  // Maps a jet point of order <= 2; time is unchanged.
  JetPoint apply(const JetPoint& p) const {
    if (p.order() > 2) throw AtlasError("transition prolongation is limited to order 2");
    const Compiled& c = pieces_[select(p.x(), p.y())];
    std::array<double, kJetSlots> out{};
    out[0] = p.t();
    const double* v = p.values().data();
    for (int k = 0; k < 2 * (p.order() + 1); ++k) out[1 + k] = c.components[k](v);
    return JetPoint::from_values(p.order(), out);
  }

  // Jacobian of the first-jet map over (t, x, y, xd, yd). Order-0 points are
  // treated as having zero velocity; the position block is unaffected.
  Matrix5 jacobian(const JetPoint& p) const {
    const Compiled& c = pieces_[select(p.x(), p.y())];
    JetPoint q = p.order() >= 1 ? p : p.with_order(1);
    Matrix5 J{};
    J[0][0] = 1.0;
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 4; ++col) J[r + 1][col + 1] = c.jacobian[r][col](q.values().data());
    return J;
  }

 private:
  struct Compiled {
    std::vector<JetFunction> guards;
    std::array<JetFunction, 6> components;  // xbar, ybar, xbar_d, ybar_d, xbar_dd, ybar_dd
    std::array<std::array<JetFunction, 4>, 4> jacobian;
  };

  void check_position_only(const Expression& e, const char* what) const {
    for (const auto& v : e.free_vars())
      if (v != "x" && v != "y")
        throw AtlasError(std::string("transition ") + from_ + " -> " + to_ + ": " + what +
                         " depends on '" + v + "'; only the chart coordinates are allowed");
  }

  std::string from_, to_;
  Box sample_box_;
  std::vector<Compiled> pieces_;
};

namespace detail {

inline double minor_det(const Matrix5& J, const std::array<int, 3>& rows, const std::array<int, 3>& cols,
                        int k) {
  if (k == 1) return J[rows[0]][cols[0]];
  if (k == 2) return J[rows[0]][cols[0]] * J[rows[1]][cols[1]] - J[rows[0]][cols[1]] * J[rows[1]][cols[0]];
  double d = 0.0;
  for (int j = 0; j < 3; ++j) {
    std::array<int, 3> r{rows[1], rows[2], 0}, c{};
    int n = 0;
    for (int m = 0; m < 3; ++m)
      if (m != j) c[n++] = cols[m];
    d += (j % 2 ? -1.0 : 1.0) * J[rows[0]][cols[j]] * minor_det(J, r, c, 2);
  }
  return d;
}

inline std::array<int, 3> mask_indices(BasisMask m) {
  std::array<int, 3> out{};
  int n = 0;
  for (int i = 0; i < kFormCoords && n < 3; ++i)
    if (m & (1u << i)) out[n++] = i;
  return out;
}

}  // namespace detail

// Pullback of a form given in the target chart, evaluated at points of the
// source chart.
inline FormValues pullback_at(const JetMap& map, const FormField& rho_target, const JetPoint& p) {
  const int k = rho_target.degree;
  FormValues target = rho_target(map.apply(p));
  FormValues out;
  out.degree = k;
  if (k == 0) {
    out.c[0] = target.c[0];
    return out;
  }
  Matrix5 J = map.jacobian(p);
  for (int mb = 0; mb < 32; ++mb) {
    if (target.c[mb] == 0.0 || std::popcount(static_cast<unsigned>(mb)) != k) continue;
    auto rows = detail::mask_indices(static_cast<BasisMask>(mb));
    for (int ma = 0; ma < 32; ++ma) {
      if (std::popcount(static_cast<unsigned>(ma)) != k) continue;
      out.c[ma] += target.c[mb] * detail::minor_det(J, rows, detail::mask_indices(static_cast<BasisMask>(ma)), k);
    }
  }
  return out;
}

inline FormField pullback(const JetMap& map, const FormField& rho_target) {
  return {rho_target.degree, kAllCoords,
          [map, rho_target](const JetPoint& p) { return pullback_at(map, rho_target, p); }};
}

// Source forms as numeric pairs (eps_x, eps_y) on second jets.
using SourceField = std::function<std::array<double, 2>(const JetPoint&)>;

// eps_A,i = sum_k eps_B,k(F(p)) d xbar_k / d x_i.
inline std::array<double, 2> pullback_source_at(const JetMap& map, const SourceField& eps_target,
                                                const JetPoint& p) {
  auto e = eps_target(map.apply(p));
  auto J = map.position_jacobian(p.x(), p.y());
  return {e[0] * J[0] + e[1] * J[2], e[0] * J[1] + e[1] * J[3]};
}

class Atlas {
 public:
  bool orientable = true;
  bool compact = false;

  void add_chart(Chart c) {
    if (c.coords[0] == c.coords[1]) throw AtlasError("chart " + c.name + ": coordinate names must differ");
    if (c.domain.empty()) throw AtlasError("chart " + c.name + ": empty domain");
    if (find_chart(c.name)) throw AtlasError("duplicate chart " + c.name);
    charts_.push_back(std::move(c));
  }

  void add_transition(const TransitionMap& t) {
    if (!find_chart(t.from)) throw AtlasError("transition references unknown chart " + t.from);
    if (!find_chart(t.to)) throw AtlasError("transition references unknown chart " + t.to);
    if (t.from == t.to) throw AtlasError("transition from a chart to itself");
    auto key = std::make_pair(t.from, t.to);
    if (maps_.count(key)) throw AtlasError("duplicate transition " + t.from + " -> " + t.to);
    maps_.emplace(key, JetMap(t));
  }

  const std::vector<Chart>& charts() const { return charts_; }

  const Chart* find_chart(const std::string& name) const {
    for (const auto& c : charts_)
      if (c.name == name) return &c;
    return nullptr;
  }

  const Chart& chart(const std::string& name) const {
    if (auto c = find_chart(name)) return *c;
    throw AtlasError("unknown chart " + name);
  }

  const JetMap* transition(const std::string& from, const std::string& to) const {
    auto it = maps_.find({from, to});
    return it == maps_.end() ? nullptr : &it->second;
  }

  const std::map<std::pair<std::string, std::string>, JetMap>& transitions() const { return maps_; }

  // Position of a point of chart `from` in chart `to`, if it lies in the
  // overlap (a guard is active and the image is inside the target domain).
  std::optional<std::array<double, 2>> map_point(const std::string& from, const std::string& to, double x,
                                                 double y) const {
    if (from == to) {
      if (!chart(from).domain.contains(x, y)) return std::nullopt;
      return std::array<double, 2>{x, y};
    }
    const JetMap* m = transition(from, to);
    if (!m || !chart(from).domain.contains(x, y)) return std::nullopt;
    auto piece = m->try_select(x, y);
    if (!piece) return std::nullopt;
    auto q = m->map_position(x, y);
    if (!chart(to).domain.contains(q[0], q[1])) return std::nullopt;
    return q;
  }

  // det d(to)/d(from) at a point of the overlap; 1 for identical charts.
  double jacobian_det(const std::string& from, const std::string& to, double x, double y) const {
    if (from == to) return 1.0;
    auto J = transition(from, to)->position_jacobian(x, y);
    return J[0] * J[3] - J[1] * J[2];
  }

 private:
  std::vector<Chart> charts_;
  std::map<std::pair<std::string, std::string>, JetMap> maps_;
};

struct AtlasValidation {
  struct Entry {
    std::string from, to;
    double max_roundtrip_error = 0.0;
    double min_abs_jacobian = INFINITY;
    int uncovered = 0;       // samples with no active guard
    int outside_target = 0;  // image not in the target domain
    int missing_inverse = 0;
  };
  std::vector<Entry> entries;
  bool ok = true;
  std::vector<std::string> problems;
};

// Guard partition, inverse consistency (tol 1e-9), nonvanishing Jacobian.
inline AtlasValidation validate_atlas(const Atlas& atlas, std::uint64_t seed, int samples = 200,
                                      double tol = 1e-9) {
  AtlasValidation out;
  Sampler s(seed);
  for (const auto& [key, map] : atlas.transitions()) {
    AtlasValidation::Entry e{key.first, key.second};
    const JetMap* inverse = atlas.transition(key.second, key.first);
    const Box box = map.sample_box().clipped(1e6);
    for (int i = 0; i < samples; ++i) {
      double x = s.uniform(box.x.lo, box.x.hi), y = s.uniform(box.y.lo, box.y.hi);
      std::optional<int> piece;
      try {
        piece = map.try_select(x, y);
      } catch (const GuardError& err) {
        out.problems.push_back(err.what());
        out.ok = false;
        continue;
      }
      if (!piece) {
        ++e.uncovered;
        continue;
      }
      auto q = map.map_position(x, y);
      if (!atlas.chart(key.second).domain.contains(q[0], q[1])) {
        ++e.outside_target;
        continue;
      }
      auto J = map.position_jacobian(x, y);
      e.min_abs_jacobian = std::min(e.min_abs_jacobian, std::abs(J[0] * J[3] - J[1] * J[2]));
      if (!inverse) {
        ++e.missing_inverse;
        continue;
      }
      try {
        auto back = inverse->map_position(q[0], q[1]);
        e.max_roundtrip_error =
            std::max({e.max_roundtrip_error, std::abs(back[0] - x), std::abs(back[1] - y)});
      } catch (const GuardError&) {
        ++e.missing_inverse;
      }
    }
    auto name = e.from + " -> " + e.to;
    if (e.uncovered) out.problems.push_back(name + ": samples outside every guard region");
    if (e.outside_target) out.problems.push_back(name + ": images outside the target domain");
    if (e.missing_inverse) out.problems.push_back(name + ": no inverse transition for some samples");
    if (e.max_roundtrip_error > tol) out.problems.push_back(name + ": transitions do not compose to identity");
    if (!(e.min_abs_jacobian > 1e-12)) out.problems.push_back(name + ": degenerate Jacobian");
    out.ok = out.ok && out.problems.empty();
    out.entries.push_back(e);
  }
  out.ok = out.problems.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Overlap checks.

struct GlobalityEntry {
  std::string from, to;
  int samples = 0;
  double max_mismatch = 0.0;
  std::optional<JetPoint> worst;
};

struct GlobalityReport {
  std::vector<GlobalityEntry> entries;
  double max_mismatch() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_mismatch);
    return m;
  }
  bool pass(double tol) const { return max_mismatch() < tol; }
};

namespace detail {

// Samples jet points in the overlap box of `map`, skipping guard seams.
template <class Compare>
GlobalityEntry check_overlap(const Atlas& atlas, const JetMap& map, int order, int samples, Sampler& s,
                             const SampleRanges& ranges, Compare&& mismatch) {
  GlobalityEntry e{map.from(), map.to()};
  const Box& target = atlas.chart(map.to()).domain;
  int attempts = 0;
  while (e.samples < samples) {
    if (++attempts > 50 * samples)
      throw AtlasError("cannot sample the overlap " + map.from() + " -> " + map.to());
    JetPoint p = s.jet(order, map.sample_box(), ranges);
    if (!map.try_select(p.x(), p.y())) continue;
    auto q = map.map_position(p.x(), p.y());
    if (!target.contains(q[0], q[1])) continue;
    double m = mismatch(p);
    if (std::isnan(m)) m = INFINITY;
    if (!e.worst || m > e.max_mismatch) {
      e.max_mismatch = m;
      e.worst = p;
    }
    ++e.samples;
  }
  return e;
}

}  // namespace detail

// Compares each chart's form with the pullback of the neighbour's form over
// every declared transition. Charts absent from `family` are skipped.
inline GlobalityReport check_global(const Atlas& atlas, const std::map<std::string, FormField>& family,
                                    int order, std::uint64_t seed, int samples = 200,
                                    const SampleRanges& ranges = {}) {
  GlobalityReport r;
  Sampler s(seed);
  for (const auto& [key, map] : atlas.transitions()) {
    auto a = family.find(key.first), b = family.find(key.second);
    if (a == family.end() || b == family.end()) continue;
    r.entries.push_back(detail::check_overlap(atlas, map, order, samples, s, ranges, [&](const JetPoint& p) {
      return (a->second(p) - pullback_at(map, b->second, p)).max_abs();
    }));
  }
  return r;
}

inline GlobalityReport check_global(const Atlas& atlas, const std::map<std::string, SourceField>& family,
                                    std::uint64_t seed, int samples = 200, const SampleRanges& ranges = {}) {
  GlobalityReport r;
  Sampler s(seed);
  for (const auto& [key, map] : atlas.transitions()) {
    auto a = family.find(key.first), b = family.find(key.second);
    if (a == family.end() || b == family.end()) continue;
    r.entries.push_back(detail::check_overlap(atlas, map, 2, samples, s, ranges, [&](const JetPoint& p) {
      auto lhs = a->second(p);
      auto rhs = pullback_source_at(map, b->second, p);
      return std::max(std::abs(lhs[0] - rhs[0]), std::abs(lhs[1] - rhs[1]));
    }));
  }
  return r;
}

// Scalar functions on jets (Lagrangians) compared as L_A(p) = L_B(F(p)).
using ScalarField = std::function<double(const JetPoint&)>;

inline GlobalityReport check_global_scalar(const Atlas& atlas, const std::map<std::string, ScalarField>& family,
                                           int order, std::uint64_t seed, int samples = 200,
                                           const SampleRanges& ranges = {}) {
  GlobalityReport r;
  Sampler s(seed);
  for (const auto& [key, map] : atlas.transitions()) {
    auto a = family.find(key.first), b = family.find(key.second);
    if (a == family.end() || b == family.end()) continue;
    r.entries.push_back(detail::check_overlap(atlas, map, order, samples, s, ranges, [&](const JetPoint& p) {
      return std::abs(a->second(p) - b->second(map.apply(p)));
    }));
  }
  return r;
}

}  // namespace globlag
