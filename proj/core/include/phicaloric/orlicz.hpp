#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace phicaloric {

// Scalar growth function phi: [0,inf) -> [0,inf), convex away from declared
// exclusion windows, with phi(0) = phi'(0) = 0 and a positive increasing
// derivative.  Evaluation is pointwise and thread safe.
class OrliczFunction {
 public:
  using Window = std::pair<double, double>;

  virtual ~OrliczFunction() = default;

  virtual double value(double t) const = 0;
  virtual double deriv(double t) const = 0;
  virtual double deriv2(double t) const = 0;
  virtual std::string name() const = 0;

  // Open intervals where the function is a synthetic C^2 blend between
  // analytic branches; curvature-sensitive diagnostics skip them.
  virtual std::vector<Window> exclusions() const { return {}; }
};

using OrliczPtr = std::shared_ptr<const OrliczFunction>;

// t^p / p, requires p > 1.
OrliczPtr make_power(double p);

// max{t^p, t^q} and min{t^p, t^q}, C^2-blended across the kink at t = 1 by a
// quintic on [1 - 1e-3, 1 + 1e-3]; the window shows up in exclusions().
OrliczPtr make_max_power(double p, double q);
OrliczPtr make_min_power(double p, double q);

// The shifted function phi_a with (phi_a)'(t) = phi'(a+t) t/(a+t).  a = 0
// returns the base itself and nested shifts collapse, (phi_a)_b = phi_{a+b}.
OrliczPtr make_shifted(OrliczPtr base, double a);

// Monotone interpolation of sampled derivative values (log-log with
// slope-limited cubics), power-law continuation outside the sampled range.
OrliczPtr make_table(std::vector<double> t, std::vector<double> dphi);

// The convex conjugate as a function object, evaluated by inverting phi'.
OrliczPtr make_conjugate(OrliczPtr base);

struct Characteristics {
  double char_lo = 0.0;  // min of phi''(t) t / phi'(t) over the scan
  double char_hi = 0.0;  // max of the same ratio
  double delta2 = 0.0;   // max of phi(2t)/phi(t) over the scan
};

Characteristics characteristics(const OrliczFunction& phi, double t_lo = 1e-3,
                                double t_hi = 1e3, int points = 801);

// phi^*(s) = sup_t (s t - phi(t)); closed form where one exists.
double conjugate(const OrliczFunction& phi, double s);
// Same value forced through the numeric maximizer (for cross checks).
double conjugate_numeric(const OrliczFunction& phi, double s);
// The maximizing t, i.e. the solution of phi'(t) = s.
double conjugate_argmax(const OrliczFunction& phi, double s);

struct QSelection {
  double q = 0.0;
  double c_val = 0.0;  // worst constant seen while validating the choice
  bool from_formula = false;
};

// Comparison exponent q >= 2 for the shifted-function scaling bound
// phi_a(eta t) <= c eta^{q/(q-1)} phi_a(t): the candidate max(2, char_hi + 1)
// when it validates, otherwise the first validating value on a 0.1 grid.
QSelection select_q(const OrliczFunction& phi);

// Solve phi'(g) g = c^2 for g >= 0.
double invert_phiprime_t(const OrliczFunction& phi, double c);

// rho(t) = phi(t)^{n/2} t^{2-n}.
double rho(const OrliczFunction& phi, int n, double t);

struct RhoAdmissibility {
  bool admissible = false;
  double worst_ratio = 0.0;  // worst prefix-max / current value on the scan
};

// The scalar reduction needs rho almost increasing; the gate bounds how far
// rho can drop below its running maximum on a log grid.
RhoAdmissibility rho_admissible(const OrliczFunction& phi, int n,
                                double t_lo = 1e-3, double t_hi = 1e3,
                                int points = 801);

// max{sqrt(phi''(t)), 1/sqrt(phi''(t))}.
double kappa(const OrliczFunction& phi, double t);

// Truncations (sqrt(phi'(t) t) - sqrt(phi'(gamma) gamma))_+ and
// (t^2 - gamma^2)_+.
double level_G(const OrliczFunction& phi, double gamma, double t);
double level_H(double gamma, double t);

namespace detail {

// Direct quadrature of the shifted derivative: the reference path for tests
// and the evaluation path for shifts of kinds without a closed form.
double shifted_value_by_quadrature(const OrliczFunction& phi, double a,
                                   double t);

// Closed form for shifted powers; switches to a series for t << a.
double shifted_power_value(double p, double a, double t);

// Dispatch: closed form for power bases, quadrature otherwise.
double shifted_value(const OrliczFunction& phi, double a, double t);

}  // namespace detail

}  // namespace phicaloric
