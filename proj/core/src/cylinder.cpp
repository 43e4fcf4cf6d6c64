#include <phicaloric/cylinder.hpp>

#include <phicaloric/errors.hpp>

#include <cmath>
#include <cstdio>

namespace phicaloric {
namespace {

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// C^2 quintic smoothstep on [0,1]; derivative peaks at 15/8.
double smooth(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  // The polynomial stays in [0,1] on paper; clip the rounding overshoot so
  // the weight contract is exact.
  return std::fmin(((6.0 * s - 15.0) * s + 10.0) * s * s * s, 1.0);
}

double smooth_d(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double w = s * (1.0 - s);
  return 30.0 * w * w;
}

double dist(const double* a, const double* b, int n) {
  double ss = 0.0;
  for (int d = 0; d < n; ++d) ss += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(ss);
}

}  // namespace

void check_cylinder(const ParabolicCylinder& cyl, const GridSpec& g,
                    double tmin, double tmax) {
  if (!(cyl.R > 0.0) || !(cyl.alpha > 0.0)) {
    throw AssumptionViolation("cylinder needs R > 0 and alpha > 0, got R=" +
                              fmt_g(cyl.R) + " alpha=" + fmt_g(cyl.alpha));
  }
  const double h = grid_h(g);
  for (int d = 0; d < g.n; ++d) {
    const double tol = 1e-12 * g.extent[d];
    if (cyl.x0[d] - 2.0 * cyl.R < 2.0 * h - tol ||
        cyl.x0[d] + 2.0 * cyl.R > g.extent[d] - 2.0 * h + tol) {
      throw OutOfDomain("double ball exceeds the grid margin on axis " +
                        std::to_string(d) + ": center " + fmt_g(cyl.x0[d]) +
                        ", radius 2R=" + fmt_g(2.0 * cyl.R) +
                        " must stay two cells inside [0," +
                        fmt_g(g.extent[d]) + "]");
    }
  }
  const double tol_t = 1e-12 * std::fmax(1.0, std::fabs(tmax));
  if (cyl.t_start(2.0) < tmin - tol_t || cyl.t0 > tmax + tol_t) {
    throw OutOfDomain("double cylinder time window [" +
                      fmt_g(cyl.t_start(2.0)) + "," + fmt_g(cyl.t0) +
                      "] exceeds the sampled span [" + fmt_g(tmin) + "," +
                      fmt_g(tmax) + "]");
  }
}

CutoffFamily::CutoffFamily(const ParabolicCylinder& cyl, const OrliczPtr& phi,
                           int k_max)
    : cyl_(cyl), k_max_(k_max) {
  if (!phi) throw OutOfDomain("cutoff family needs a growth function");
  if (k_max < 0) throw OutOfDomain("cutoff family needs k_max >= 0");
  if (!(cyl.R > 0.0) || !(cyl.alpha > 0.0)) {
    throw AssumptionViolation("cutoff family needs R > 0 and alpha > 0");
  }
  q_ = select_q(*phi).q;
}

void CutoffFamily::check_k(int k) const {
  if (k < 0 || k > k_max_) {
    throw OutOfDomain("cutoff level " + std::to_string(k) +
                      " outside [0," + std::to_string(k_max_) + "]");
  }
}

double CutoffFamily::lam(int k) const { return 1.0 + std::ldexp(1.0, -k); }

double CutoffFamily::zeta(int k, double t, const double* x, int n) const {
  check_k(k);
  const double out_r = lam(k) * cyl_.R;
  const double in_r = lam(k + 1) * cyl_.R;
  const double s_sp = (out_r - dist(x, cyl_.x0, n)) / (out_r - in_r);
  const double ts_out = cyl_.t_start(lam(k));
  const double ts_in = cyl_.t_start(lam(k + 1));
  const double s_t = (t - ts_out) / (ts_in - ts_out);
  return smooth(s_sp) * smooth(s_t);
}

double CutoffFamily::dzeta_dt(int k, double t, const double* x, int n) const {
  check_k(k);
  const double out_r = lam(k) * cyl_.R;
  const double in_r = lam(k + 1) * cyl_.R;
  const double s_sp = (out_r - dist(x, cyl_.x0, n)) / (out_r - in_r);
  const double ts_out = cyl_.t_start(lam(k));
  const double ts_in = cyl_.t_start(lam(k + 1));
  const double s_t = (t - ts_out) / (ts_in - ts_out);
  return smooth(s_sp) * smooth_d(s_t) / (ts_in - ts_out);
}

double CutoffFamily::grad_norm(int k, double t, const double* x, int n) const {
  check_k(k);
  const double out_r = lam(k) * cyl_.R;
  const double in_r = lam(k + 1) * cyl_.R;
  const double s_sp = (out_r - dist(x, cyl_.x0, n)) / (out_r - in_r);
  const double ts_out = cyl_.t_start(lam(k));
  const double ts_in = cyl_.t_start(lam(k + 1));
  const double s_t = (t - ts_out) / (ts_in - ts_out);
  return smooth(s_t) * smooth_d(s_sp) / (out_r - in_r);
}

double CutoffFamily::grad_bound(int k) const {
  check_k(k);
  return c_zeta() * std::ldexp(1.0, k) / cyl_.R;
}

double CutoffFamily::dt_bound(int k) const {
  check_k(k);
  return c_zeta() * std::ldexp(1.0, k) / (cyl_.alpha * cyl_.R * cyl_.R);
}

double CutoffFamily::grad_sup(int k) const {
  check_k(k);
  // The radial factor peaks at 15/8 over a transition band of width
  // (lam_k - lam_{k+1}) R = 2^{-k-1} R, so the sup meets grad_bound exactly.
  return (15.0 / 8.0) / ((lam(k) - lam(k + 1)) * cyl_.R);
}

}  // namespace phicaloric
