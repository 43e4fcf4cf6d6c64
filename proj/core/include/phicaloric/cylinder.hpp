#pragma once

#include <phicaloric/grid.hpp>
#include <phicaloric/orlicz.hpp>

#include <vector>

namespace phicaloric {

// Backward space-time cylinder anchored at its end time: the scaled copy
// Q_lam = (t0 - alpha lam^2 R^2, t0] x B_{lam R}(x0).  alpha is the intrinsic
// scaling weight between the time span and the ball radius.
struct ParabolicCylinder {
  double t0 = 0.0;
  double x0[2] = {0.0, 0.0};
  double R = 0.0;
  double alpha = 1.0;

  double t_start(double lam) const { return t0 - alpha * lam * lam * R * R; }
};

// The double cylinder Q_2 must sit inside the sampled domain with a two-cell
// spatial margin and inside the snapshot time span.  Throws OutOfDomain.
void check_cylinder(const ParabolicCylinder& cyl, const GridSpec& g,
                    double tmin, double tmax);

// Shrinking smooth cutoffs between the nested cylinders Q_k = Q_{(1+2^-k)},
// k = 0..k_max: zeta_k is 1 on Q_{k+1}, vanishes outside Q_k, and is free at
// the end time t0 (it cuts only the lateral and initial sides).  Both factors
// are quintic smoothsteps of the scaled boundary distances, so the gradient
// bounds hold with the closed-form constant c_zeta = 15/4:
//   sup |grad zeta_k|  <= c_zeta 2^k / R
//   sup |dt  zeta_k|   <= c_zeta 2^k / (alpha R^2).
// q is the cutoff exponent picked by select_q for the growth function.
class CutoffFamily {
 public:
  CutoffFamily(const ParabolicCylinder& cyl, const OrliczPtr& phi, int k_max);

  const ParabolicCylinder& cylinder() const { return cyl_; }
  int k_max() const { return k_max_; }
  double q() const { return q_; }
  double c_zeta() const { return 15.0 / 4.0; }

  // lam_k = 1 + 2^-k, the scale of Q_k.
  double lam(int k) const;

  double zeta(int k, double t, const double* x, int n) const;
  // Analytic partials at a point: time derivative and the norm of the
  // spatial gradient (the gradient is radial).
  double dzeta_dt(int k, double t, const double* x, int n) const;
  double grad_norm(int k, double t, const double* x, int n) const;

  // Certified envelopes, and the exact supremum of |grad zeta_k|.
  double grad_bound(int k) const;
  double dt_bound(int k) const;
  double grad_sup(int k) const;

 private:
  void check_k(int k) const;

  ParabolicCylinder cyl_;
  int k_max_ = 0;
  double q_ = 2.0;
};

}  // namespace phicaloric
