#pragma once

// Source forms written out by hand in canonical jet variables. Tests use these
// as independent oracles; the JSON fixtures are checked against them.

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "globlag/expr.hpp"
#include "globlag/sampling.hpp"
#include "globlag/varcheck.hpp"

namespace problems {

using globlag::Box;
using globlag::Expression;
using globlag::SourceForm;

inline constexpr double kPi = std::numbers::pi;

inline Expression P(const std::string& text, const globlag::Binding& constants = {}) {
  return globlag::parse(text, {constants, {}});
}

inline SourceForm free_particle() { return {P("xdd"), P("ydd")}; }
inline SourceForm harmonic() { return {P("xdd + x"), P("ydd + y")}; }
inline SourceForm curl_only() { return {P("yd"), P("0")}; }
inline SourceForm not_affine() { return {P("xdd^2"), P("ydd")}; }

// Kinetic energy of the flat Moebius band embedded with radius r (x = phi, y = tau).
inline globlag::Binding mobius_constants() { return {{"r", 2.0}}; }
inline Expression mobius_G() { return P("(r + y*cos(x/2))^2 + y^2/4", mobius_constants()); }
inline Expression mobius_Q() { return P("4*cos(x/2)*(r + y*cos(x/2)) + y", mobius_constants()); }
inline SourceForm mobius() {
  auto c = mobius_constants();
  Expression ax = P("xd^2*y*sin(x/2)*(r + y*cos(x/2))/2", c) - P("xd*yd/2") * mobius_Q();
  Expression ay = P("xd^2/4") * mobius_Q();
  return {ax - mobius_G() * P("xdd"), ay - P("ydd")};
}
inline Expression mobius_kinetic() { return P("yd^2/2") + P("xd^2/2") * mobius_G(); }
inline Box mobius_V() { return {{-kPi, kPi}, {-1, 1}}; }
inline Box mobius_Vbar() { return {{0, 2 * kPi}, {-1, 1}}; }

// Gyroscopic system on the torus with radii R = 2, r = 1 (x = phi, y = theta);
// S = a sin(theta) - b sin(phi) cos(theta) + c cos(phi) cos(theta).
inline SourceForm torus(const std::string& a, const std::string& b, const std::string& c) {
  globlag::Binding k{{"R", 2.0}, {"r", 1.0}};
  std::string S = "((" + a + ")*sin(y) - (" + b + ")*sin(x)*cos(y) + (" + c + ")*cos(x)*cos(y))";
  Expression ax = P("-r*(R + r*cos(y))*(2*xd*sin(y) + " + S + ")*yd", k);
  Expression ay = P("r*(R + r*cos(y))*(xd*sin(y) + " + S + ")*xd", k);
  return {ax + P("(R + r*cos(y))^2*xdd", k), ay + P("r^2*ydd", k)};
}
inline SourceForm torus_constant() { return torus("1", "1", "1"); }
inline SourceForm torus_trig() { return torus("cos(y)*sin(x)", "sin(y) + cos(x)", "sin(x)"); }
inline Box torus_pi() { return {{-kPi, kPi}, {-kPi, kPi}}; }

// Sampling ranges that reach across the whole bounded torus charts.
inline globlag::SampleRanges wide_ranges() {
  globlag::SampleRanges r;
  r.position_limit = 10.0;
  return r;
}

inline std::string fixture(const std::string& name) { return std::string(GLOBLAG_FIXTURE_DIR) + "/" + name + ".json"; }

// Random polynomial of total degree <= 3 in the given variables.
inline std::string random_polynomial(std::mt19937_64& rng, const std::vector<std::string>& vars) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(vars.size()) - 1), deg(0, 3);
  std::ostringstream s;
  s.precision(17);
  s << coef(rng);
  for (int term = 0; term < 8; ++term) {
    s << " + " << coef(rng);
    for (int k = deg(rng); k > 0; --k) s << "*" << vars[pick(rng)];
  }
  return s.str();
}

}  // namespace problems
