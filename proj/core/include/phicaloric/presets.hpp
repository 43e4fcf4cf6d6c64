#pragma once

#include <phicaloric/grid.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace phicaloric {

// Named analytic data sets for runs and benchmarks.  A preset bundles the
// initial datum, the Dirichlet trace, an optional forcing and, when one is
// known, the exact solution it was derived from.  Presets that encode a
// specific nonlinearity (mms_p3, barenblatt, radial_pharmonic) must be
// paired with phi = t^p/p for the matching p.
struct Preset {
  std::function<double(const double*, int)> u0;
  std::function<double(double, const double*, int)> bc;
  std::function<double(double, const double*, int)> forcing;  // null = 0
  std::function<double(double, const double*, int)> exact;    // null = none
};

struct PresetParams {
  double amplitude = 1.0;
  std::uint64_t seed = 1;
  double p = 3.0;         // nonlinearity exponent where relevant
  double mass = 0.25;     // barenblatt profile constant C
  double t_offset = 1.0;  // barenblatt evaluation starts at this time
  double center[2] = {-0.25, 0.5};  // radial singularity (outside domain)
};

// Source-type self-similar solution of the p-Laplace evolution in one
// space dimension, centered at xc.
double barenblatt_value(double p, double mass, double t, double x, double xc);

// Radial profile |x-c|^{(p-n)/(p-1)}, the p-harmonic power solution (p != n).
double radial_pharmonic_value(double p, int n, const double* x,
                              const double* c);

// Names: zero, eigenmode, affine, random_smooth, mms_p3, barenblatt,
// radial_pharmonic, harmonic_poly.  Unknown name -> OutOfDomain.
Preset make_preset(const std::string& name, const PresetParams& prm,
                   const GridSpec& g);
const std::vector<std::string>& preset_names();

}  // namespace phicaloric
