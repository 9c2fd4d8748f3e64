#pragma once

// Boxes and seeded sampling of jet points.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "globlag/jet.hpp"

namespace globlag {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v > lo && v < hi; }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  Interval clipped(double limit) const { return {std::max(lo, -limit), std::min(hi, limit)}; }
};

struct Box {
  Interval x, y;

  bool contains(double px, double py) const { return x.contains(px) && y.contains(py); }
  bool bounded() const { return x.bounded() && y.bounded(); }
  Box clipped(double limit) const { return {x.clipped(limit), y.clipped(limit)}; }
  // Same centre, half-widths scaled by f.
  Box shrunk(double f) const {
    return {{x.mid() - 0.5 * f * x.width(), x.mid() + 0.5 * f * x.width()},
            {y.mid() - 0.5 * f * y.width(), y.mid() + 0.5 * f * y.width()}};
  }
  bool empty() const { return !(x.lo < x.hi) || !(y.lo < y.hi); }
};

inline std::string to_string(const Box& b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "(%.6g, %.6g) x (%.6g, %.6g)", b.x.lo, b.x.hi, b.y.lo, b.y.hi);
  return buf;
}

struct SampleRanges {
  double position_limit = 2.0;  // clip for unbounded domains
  double velocity = 2.0;        // velocities in [-v, v]^2
  double acceleration = 2.0;
  double higher = 2.0;          // third and fourth order formal coordinates
  double time = 2.0;
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("Sampler: empty interval");
    for (;;) {
      double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
      if (u > 0.0) return lo + (hi - lo) * u;
    }
  }

  double in(const Interval& i, double limit) {
    Interval c = i.clipped(limit);
    return uniform(c.lo, c.hi);
  }

  JetPoint jet(int order, const Box& positions, const SampleRanges& r = {}) {
    std::array<double, kJetSlots> v{};
    v[0] = uniform(-r.time, r.time);
    v[1] = in(positions.x, r.position_limit);
    v[2] = in(positions.y, r.position_limit);
    for (int k = 1; k <= order; ++k) {
      double range = k == 1 ? r.velocity : k == 2 ? r.acceleration : r.higher;
      v[jet_slot_of(k, 0)] = uniform(-range, range);
      v[jet_slot_of(k, 1)] = uniform(-range, range);
    }
    return JetPoint::from_values(order, v);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace globlag
