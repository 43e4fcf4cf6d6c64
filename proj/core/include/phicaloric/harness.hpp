#pragma once

#include <phicaloric/cylinder.hpp>
#include <phicaloric/fields.hpp>

#include <functional>
#include <string>
#include <vector>

namespace phicaloric {

// A scalar sampled on the space-time lattice of a solve: one value per cell
// per retained snapshot.  All harness integrals run over such fields.
struct ScalarField {
  const GridSpec* g = nullptr;
  std::vector<double> times;              // ascending snapshot times
  std::vector<std::vector<double>> vals;  // [frame][cell]
};

// Builds a ScalarField by evaluating fn on every (frame, cell) of a solve.
ScalarField cell_scalar(const GradOrField& f,
                        const std::function<double(const FieldFrame&, int)>& fn);

// Scaled space-time norm over the double cylinder: with m_j the weighted
// space average of |f|^r on snapshot j,
//   ( avg_j m_j^{s/r} )^{1/s},
// where the space average runs over cells centered in B_2R weighted by
// zeta_k^q (weight 1 when cutoffs is null) and the time average runs over
// snapshots in (t0 - 4 alpha R^2, t0].  Averages normalize by the discrete
// member count (the region's own measure); s or r = infinity takes the
// discrete maximum instead (for r = inf the weight only gates support).
double bochner_norm(const ScalarField& f, double s, double r, int k,
                    const ParabolicCylinder& cyl, const CutoffFamily* cutoffs);

// Level-set truncation trace: levels gamma_k = gamma_inf (1 - 2^-k) and the
// weighted masses
//   Y_k = || phi(v) chi_{v>gamma_k} ||_{L1(L1)(k)}
//   Z_k = (1/alpha) || v^2  chi_{v>gamma_k} ||_{L1(L1)(k)}
//   W_k = Y_k + Z_k.
// A vanishing W_k stops the trace early; stop_k records that index (-1 when
// every level is active).
struct DeGiorgiTrace {
  double gamma_inf = 0.0;
  double alpha = 0.0;
  std::vector<double> gamma;
  std::vector<double> Y, Z, W;
  int stop_k = -1;
};

DeGiorgiTrace compute_trace(const GradOrField& f, const ParabolicCylinder& cyl,
                            const OrliczPtr& phi, double gamma_inf, int k_max);

// One transition k -> k+1 of the level-set estimate: the two truncated norms
//   lhs1 = (1/alpha) || v^2  chi_{v>gamma_{k+1}} ||_{Linf(L1)(k+1)}
//   lhs2 = || phi(v) chi_{v>gamma_{k+1}} ||_{L1(L^rhat)(k+1)}
// against the bound 2^{3k} W_k.  rhat is n/(n-2) for n >= 3 and a fixed large
// exponent (10) below that.  c1, c2 are the empirical constants lhs/(2^3k W_k)
// and ck_raw = max(lhs)/W_k feeds the growth-rate fit.
struct LevelsetRow {
  int k = 0;
  double lhs1 = 0.0, lhs2 = 0.0;
  double c1 = 0.0, c2 = 0.0;
  double ck_raw = 0.0;
  bool vacuous = false;
};

struct LevelsetReport {
  std::vector<LevelsetRow> rows;
  double max_c = 0.0;     // max over rows of max(c1, c2)
  double beta_fit = 0.0;  // slope of log2(ck_raw) against k
  bool all_vacuous = true;
};

LevelsetReport verify_levelset_lemma(const DeGiorgiTrace& trace,
                                     const GradOrField& f,
                                     const ParabolicCylinder& cyl,
                                     const OrliczPtr& phi);

// Root of  min{ rho(gamma) alpha^{(n-2)/2}, gamma^2 / alpha } = kappa_cal W0
// with W0 the plain double-cylinder average of phi(v) + v^2/alpha.  Requires
// rho almost increasing.  W0 = 0 returns 0.
double choose_gamma_infty(const GradOrField& f, const ParabolicCylinder& cyl,
                          const OrliczPtr& phi, double kappa_cal = 1.0);

// Sup bound on the inner cylinder against the average on the double one:
//   lhs = min{ alpha^{(n-2)/2} sup_{Q_R} rho(v), (1/alpha) sup_{Q_R} v^2 }
//   rhs = avg_{Q_2R} ( v^2/alpha + phi(v) ).
struct MainBoundReport {
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
};

MainBoundReport verify_main_bound(const GradOrField& f,
                                  const ParabolicCylinder& cyl,
                                  const OrliczPtr& phi);

// Power-growth comparison at one amplitude: the intrinsic estimate keeps
//   rhs_new = avg_{Q_2R} ( v^2/alpha + v^p )
// while the classical bound pads it with the scaling term,
//   rhs_dib = max{ rhs_new, alpha^{p/(2-p)} },
// which cannot vanish with the data.  lhs uses nu2 = n(p-2)+4.  p = 2 makes
// the pad exponent undefined and the row is skipped with a notice.
struct DibCompareRow {
  double amplitude = 0.0;
  double lhs = 0.0, rhs_new = 0.0, rhs_dib = 0.0;
  bool skipped = false;
  std::string notice;
};

DibCompareRow dibenedetto_compare(const GradOrField& f,
                                  const ParabolicCylinder& cyl, double p,
                                  double amplitude);

// Weight in the energy estimate: f(v) = 1, the level indicator chi_{v>gamma},
// or a user-supplied bounded nondecreasing function (its potential H with
// H'(t) = t f(t) is then tabulated by quadrature).
struct FChoice {
  enum Kind { Constant, Indicator, Custom } kind = Constant;
  double gamma = 0.0;
  std::function<double(double)> fn;
};

// Discrete energy (Caccioppoli) estimate with cutoff eta = zeta_k:
//   lhs_sup   = sup over Q_R snapshots of (1/alpha) avg_{B_R} H(v) eta^q
//   lhs_gradv = R^2 avg_{Q_R} |grad V|^2 eta^q f(v)
//   rhs1      = R^2 |sup grad eta|^2 avg_{Q_2R} |V|^2 f(v)
//   rhs2      = R^2 avg_{Q_2R} H(v) eta^{q-1} |dt eta|
// and c_emp = (lhs_sup + lhs_gradv)/(rhs1 + rhs2).  For the indicator weight
// the truncated form is evaluated as well, with G = level_G, H = level_H and
// the central-difference gradient of G(v) eta^{q/2}.
struct CaccioppoliReport {
  double lhs_sup = 0.0, lhs_gradv = 0.0;
  double rhs1 = 0.0, rhs2 = 0.0;
  double c_emp = 0.0;
  bool vacuous = false;

  bool has_truncated = false;
  double cor_lhs_sup = 0.0, cor_lhs_grad = 0.0;
  double cor_rhs1 = 0.0, cor_rhs2 = 0.0;
  double cor_c_emp = 0.0;
  bool cor_vacuous = false;
};

CaccioppoliReport caccioppoli_check(const GradOrField& f,
                                    const ParabolicCylinder& cyl,
                                    const OrliczPtr& phi, const FChoice& fc,
                                    const CutoffFamily& cutoffs, int k);

struct Ball {
  double x0[2] = {0.0, 0.0};
  double R = 0.0;
};

// Stationary sup bound sup_{B_R} phi(v) vs avg_{B_2R} phi(v) on the last
// snapshot, plus the truncation iteration: with c_k = c_inf (1 + 2^-k) and
// shrinking ball cutoffs eta_k,
//   U_k = avg_{B_2R} ( sqrt(phi'(v) v) - c_k )_+^2 eta_k^q,
// where c_inf solves the calibration c_inf^2 = kappa_cal U_0(c_inf).  The
// levels gamma_k with phi'(gamma_k) gamma_k = c_k^2 are recorded.
struct StationaryReport {
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
  double c_inf = 0.0;
  std::vector<double> U;
  std::vector<double> gamma_levels;
  bool vacuous = false;
};

StationaryReport stationary_check(const GradOrField& f, const Ball& ball,
                                  const OrliczPtr& phi, int k_max = 12,
                                  double kappa_cal = 1.0);

// L1 control of second differences on the snapshot nearest the cylinder's
// end time, cells centered in B_R:
//   lhs1 = avg |grad^2 u|          vs  rhs      = avg |grad V|^2 + avg phi(v) + phi*(1)
//   lhs2 = avg |grad A(grad u)|    vs  rhs_flux = avg |grad V|^2 + avg phi(v) + phi(1).
struct W21Report {
  double lhs1 = 0.0, lhs2 = 0.0;
  double rhs = 0.0, rhs_flux = 0.0;
  double ratio1 = 0.0, ratio2 = 0.0;
};

W21Report w21_check(const GradOrField& f, const ParabolicCylinder& cyl,
                    const OrliczPtr& phi);

// Oscillation-decay diagnostic: fits mu in
//   osc_{Q_r} grad u ~ C ( r/R kappa(sup_{Q_R} v) )^mu
// by log-log regression over four nested radii r <= R/2.  Purely diagnostic;
// oscillations at the rounding floor are reported unresolved.
struct HoelderReport {
  double mu_fit = 0.0;
  double kappa_at_sup = 0.0;
  std::vector<double> radii;
  std::vector<double> oscs;
  bool unresolved = false;
};

HoelderReport hoelder_diagnostic(const GradOrField& f,
                                 const ParabolicCylinder& cyl,
                                 const OrliczPtr& phi);

// Worst constant of the level inflation bound
//   h(t) <= c 2^{k+1} ( h(t) - h(gamma_k) )  for t > gamma_{k+1},
// sampled over (gamma_{k+1}, 4 gamma_inf].  h_kind 0 is h(t) = t^2,
// h_kind 1 is h(t) = sqrt(phi'(t) t).
double level_inflation_constant(const OrliczPtr& phi, int h_kind,
                                double gamma_inf, int k, int samples = 128);

}  // namespace phicaloric
