#pragma once

// Composite Gauss-Legendre quadrature with panel doubling.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace globlag {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

namespace detail {

inline GaussRule compute_gauss_rule(int n) {
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

}  // namespace detail

inline const GaussRule& gauss_rule(int n) {
  if (n < 1 || n > 256) throw std::invalid_argument("gauss_rule: order out of range");
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_rule(n)).first;
  return it->second;
}

struct QuadratureOptions {
  int order = 16;
  double tolerance = 1e-10;  // on successive composite values, absolute + relative
  int max_panels = 1 << 10;
};

template <class F>
double integrate_panels(F&& f, double a, double b, int panels, const GaussRule& rule) {
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    const double mid = lo + 0.5 * h;
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
    sum += 0.5 * h * s;
  }
  return sum;
}

// Doubles the panel count until two successive values agree.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
  if (a == b) return 0.0;
  const GaussRule& rule = gauss_rule(opts.order);
  double prev = integrate_panels(f, a, b, 1, rule);
  for (int panels = 2; panels <= opts.max_panels; panels *= 2) {
    double cur = integrate_panels(f, a, b, panels, rule);
    if (std::abs(cur - prev) <= opts.tolerance * (1.0 + std::abs(cur))) return cur;
    prev = cur;
  }
  throw QuadratureError("quadrature did not converge on [" + std::to_string(a) + ", " +
                        std::to_string(b) + "] within " + std::to_string(opts.max_panels) +
                        " panels");
}

// Vector-valued variant; convergence is judged on the largest component change.
template <std::size_t N, class F>
std::array<double, N> integrate_panels_vec(F&& f, double a, double b, int panels, const GaussRule& rule) {
  const double h = (b - a) / panels;
  std::array<double, N> sum{};
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      std::array<double, N> v = f(mid + 0.5 * h * rule.nodes[i]);
      const double w = 0.5 * h * rule.weights[i];
      for (std::size_t k = 0; k < N; ++k) sum[k] += w * v[k];
    }
  }
  return sum;
}

template <std::size_t N, class F>
std::array<double, N> integrate_vec(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
  if (a == b) return {};
  const GaussRule& rule = gauss_rule(opts.order);
  auto prev = integrate_panels_vec<N>(f, a, b, 1, rule);
  for (int panels = 2; panels <= opts.max_panels; panels *= 2) {
    auto cur = integrate_panels_vec<N>(f, a, b, panels, rule);
    bool done = true;
    for (std::size_t k = 0; k < N; ++k)
      if (std::abs(cur[k] - prev[k]) > opts.tolerance * (1.0 + std::abs(cur[k]))) done = false;
    if (done) return cur;
    prev = cur;
  }
  throw QuadratureError("vector quadrature did not converge within " + std::to_string(opts.max_panels) +
                        " panels");
}

}  // namespace globlag
