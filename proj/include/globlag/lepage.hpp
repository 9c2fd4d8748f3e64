#pragma once

// Lepage equivalent of a locally variational source form and its splitting
// into a part with dt and a dt-free part.

#include <stdexcept>
#include <string>

#include "globlag/jet.hpp"
#include "globlag/sampling.hpp"
#include "globlag/varcheck.hpp"

namespace globlag {

class LepageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LepageOptions {
  std::uint64_t seed = 42;
  int samples = 50;
  double tol = 1e-12;
  Box positions;
  SampleRanges ranges;
};

// Contact-basis expression of the Lepage form, before eliminating accelerations:
//   (eps_x wx + eps_y wy)^dt + D/2 wx^wy + B_xx wx^wxd + B_xy (wx^wyd + wy^wxd) + B_yy wy^wyd.
inline DifferentialForm lepage_equivalent_second_jet(const SourceForm& eps, const ABDecomposition& ab) {
  Expression half_curl = Expression(0.5) * ab.curl_velocity();
  DifferentialForm wx = contact_x(), wy = contact_y(), wxd = contact_xd(), wyd = contact_yd();
  return wedge(eps.eps_x * wx + eps.eps_y * wy, dt()) + half_curl * wedge(wx, wy) + ab.B_xx * wedge(wx, wxd) +
         ab.B_xy * (wedge(wx, wyd) + wedge(wy, wxd)) + ab.B_yy * wedge(wy, wyd);
}

// Coordinate-basis Lepage form on first jets. The acceleration terms cancel
// identically; this is verified by sampling before they are set to zero.
inline DifferentialForm lepage_equivalent(const SourceForm& eps, const ABDecomposition& ab,
                                          const LepageOptions& opts = {}) {
  DifferentialForm full = lepage_equivalent_second_jet(eps, ab);
  Sampler s(opts.seed);
  for (const auto& [m, e] : full.terms()) {
    if (!e.depends_on("xdd") && !e.depends_on("ydd")) continue;
    JetFunction f(e);
    for (int i = 0; i < opts.samples; ++i) {
      JetPoint p = s.jet(2, opts.positions, opts.ranges);
      JetPoint q = p.with_slot(5, s.uniform(-opts.ranges.acceleration, opts.ranges.acceleration))
                       .with_slot(6, s.uniform(-opts.ranges.acceleration, opts.ranges.acceleration));
      double a = f(p), b = f(q);
      if (std::abs(a - b) > opts.tol * std::max(1.0, std::abs(a)))
        throw LepageError("Lepage form coefficient of " + mask_name(m) +
                          " depends on accelerations; the source form is not locally variational");
    }
  }
  return full.substitute({{"xdd", Expression(0.0)}, {"ydd", Expression(0.0)}});
}

struct AlphaDecomposition {
  DifferentialForm alpha0;       // degree 1 over (x, y, xd, yd)
  DifferentialForm alpha_prime;  // degree 2 over (x, y, xd, yd)
};

//   alpha0 = (A_x - D yd/2) dx + (A_y + D xd/2) dy + (B_xx xd + B_xy yd) dxd + (B_xy xd + B_yy yd) dyd
//   alpha' = D/2 dx^dy + (B_xx dx + B_xy dy)^dxd + (B_xy dx + B_yy dy)^dyd
inline AlphaDecomposition decompose_alpha(const SourceForm& eps, const ABDecomposition& ab) {
  if (!eps.time_independent || eps.depends_on_time())
    throw LepageError("the splitting of the Lepage form requires a time-independent source form");
  Expression half = Expression(0.5) * ab.curl_velocity();
  Expression xd = jet_var("xd"), yd = jet_var("yd");
  AlphaDecomposition d;
  d.alpha0 = (ab.A_x - half * yd) * dx() + (ab.A_y + half * xd) * dy() + (ab.B_xx * xd + ab.B_xy * yd) * dxd() +
             (ab.B_xy * xd + ab.B_yy * yd) * dyd();
  d.alpha_prime = half * wedge(dx(), dy()) + wedge(ab.B_xx * dx() + ab.B_xy * dy(), dxd()) +
                  wedge(ab.B_xy * dx() + ab.B_yy * dy(), dyd());
  return d;
}

}  // namespace globlag
