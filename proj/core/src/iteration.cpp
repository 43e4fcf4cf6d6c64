#include <phicaloric/iteration.hpp>

#include <phicaloric/errors.hpp>

#include <cmath>
#include <limits>

namespace phicaloric {

namespace {

void validate(const RecursionParams& prm, bool need_gamma) {
  if (!(prm.a0 >= 0.0)) throw AssumptionViolation("recursion needs a0 >= 0");
  if (!(prm.C > 0.0)) throw AssumptionViolation("recursion needs C > 0");
  if (!(prm.b >= 1.0)) throw AssumptionViolation("recursion needs b >= 1");
  if (!(prm.alpha > 0.0))
    throw AssumptionViolation("recursion needs alpha > 0");
  if (need_gamma && !(prm.gamma > 0.0))
    throw AssumptionViolation("recursion needs gamma > 0");
}

}  // namespace

double gamma_threshold(const RecursionParams& prm) {
  validate(prm, false);
  return prm.a0 * std::pow(prm.C, 1.0 / prm.alpha) *
         std::pow(prm.b, 1.0 / (prm.alpha * prm.alpha));
}

std::vector<double> iterate_bound(const RecursionParams& prm, int steps) {
  validate(prm, true);
  if (steps < 0) throw AssumptionViolation("step count must be nonnegative");
  std::vector<double> orbit;
  orbit.reserve(static_cast<size_t>(steps) + 1);
  orbit.push_back(prm.a0);
  double a = prm.a0;
  double bk = 1.0;
  for (int k = 0; k < steps; ++k) {
    a = prm.C * bk * a * std::pow(a / prm.gamma, prm.alpha);
    if (std::isnan(a)) a = std::numeric_limits<double>::infinity();
    orbit.push_back(a);
    bk *= prm.b;
    if (std::isinf(a)) {
      // Blown up: the rest of the orbit is infinite too.
      while (static_cast<int>(orbit.size()) <= steps) orbit.push_back(a);
      break;
    }
  }
  return orbit;
}

DecayReport verify_decay(const RecursionParams& prm, int steps) {
  auto orbit = iterate_bound(prm, steps);
  DecayReport rep;
  rep.steps = steps;
  rep.final_value = orbit.back();
  rep.certified = prm.gamma >= gamma_threshold(prm) * (1.0 - 1e-12);
  rep.bound_holds = true;
  const double decay = std::pow(prm.b, -1.0 / prm.alpha);
  double cap = prm.a0;
  for (int k = 0; k <= steps; ++k) {
    // Near the subnormal floor both sides are quantization noise; the decay
    // is long since settled by then.
    if (cap < 1e-280) break;
    if (orbit[k] > cap * (1.0 + 1e-9)) {
      rep.bound_holds = false;
      break;
    }
    cap *= decay;
  }
  return rep;
}

}  // namespace phicaloric
