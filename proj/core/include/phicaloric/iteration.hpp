#pragma once

#include <cstdint>
#include <vector>

namespace phicaloric {

// Superlinear recursion a_{k+1} = C b^k a_k (a_k / gamma)^alpha.  Starting
// data decay geometrically once the gate gamma dominates the threshold
// returned by gamma_threshold.
struct RecursionParams {
  double a0 = 0.0;
  double C = 1.0;
  double b = 2.0;
  double alpha = 1.0;
  double gamma = 1.0;
};

// Smallest gate for which the certificate a_k <= a0 b^{-k/alpha} closes:
// gamma_th = a0 C^{1/alpha} b^{1/alpha^2}.
double gamma_threshold(const RecursionParams& prm);

// Orbit a_0, ..., a_steps of the recursion.  Throws AssumptionViolation for
// gamma <= 0, C <= 0, b < 1, alpha <= 0 or a0 < 0.
std::vector<double> iterate_bound(const RecursionParams& prm, int steps);

struct DecayReport {
  bool certified = false;    // gate passes the closed-form threshold
  bool bound_holds = false;  // orbit stayed under a0 b^{-k/alpha} throughout
  double final_value = 0.0;
  int steps = 0;
};

DecayReport verify_decay(const RecursionParams& prm, int steps);

}  // namespace phicaloric
