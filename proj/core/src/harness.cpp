#include <phicaloric/harness.hpp>

#include <phicaloric/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace phicaloric {
namespace {

const double kInf = std::numeric_limits<double>::infinity();

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// x^e with exact fast paths for the exponents the checks actually use.
double powr(double x, double e) {
  if (e == 1.0) return x;
  if (e == 2.0) return x * x;
  return std::pow(x, e);
}

// Member cells (center-in-ball) and member snapshots (time window) of the
// scaled cylinder Q_lam.  Cell order follows the flat cell index.
struct Region {
  std::vector<int> cells;
  std::vector<int> cxs, cys;
  std::vector<double> pxs, pys;
  std::vector<int> frames;
};

Region make_region(const GridSpec& g, const std::vector<double>& times,
                   const ParabolicCylinder& cyl, double lam) {
  Region reg;
  const double rad = lam * cyl.R;
  const int ncx = g.cells[0];
  const int ncy = (g.n == 2) ? g.cells[1] : 1;
  double c[2] = {0.0, 0.0};
  for (int cx = 0; cx < ncx; ++cx) {
    for (int cy = 0; cy < ncy; ++cy) {
      cell_center(g, cx, cy, c);
      double ss = 0.0;
      for (int d = 0; d < g.n; ++d) {
        ss += (c[d] - cyl.x0[d]) * (c[d] - cyl.x0[d]);
      }
      if (std::sqrt(ss) <= rad) {
        reg.cells.push_back(cell_index(g, cx, cy));
        reg.cxs.push_back(cx);
        reg.cys.push_back(cy);
        reg.pxs.push_back(c[0]);
        reg.pys.push_back(g.n == 2 ? c[1] : 0.0);
      }
    }
  }
  const double ts = cyl.t_start(lam);
  const double tol = 1e-12 * std::fmax(1.0, std::fabs(cyl.t0));
  for (int j = 0; j < static_cast<int>(times.size()); ++j) {
    if (times[j] >= ts - tol && times[j] <= cyl.t0 + tol) {
      reg.frames.push_back(j);
    }
  }
  return reg;
}

void require_populated(const Region& reg, double lam) {
  if (reg.cells.empty()) {
    throw OutOfDomain("no cell centers inside the ball of scale " +
                      fmt_g(lam));
  }
  if (reg.frames.empty()) {
    throw OutOfDomain("no snapshots in the time window of scale " +
                      fmt_g(lam) + "; refine the snapshot stride");
  }
}

void require_field(const ScalarField& f) {
  if (f.g == nullptr || f.times.empty() || f.vals.size() != f.times.size()) {
    throw OutOfDomain("scalar field is empty or inconsistent");
  }
}

void require_solution(const GradOrField& f) {
  if (f.frames.empty() || f.frames.size() != f.snaps.size()) {
    throw OutOfDomain("field holds no derived snapshots");
  }
}

ScalarField masked(const ScalarField& base, const ScalarField& vfield,
                   double gamma) {
  ScalarField out;
  out.g = base.g;
  out.times = base.times;
  out.vals.resize(base.vals.size());
  for (std::size_t j = 0; j < base.vals.size(); ++j) {
    out.vals[j].resize(base.vals[j].size());
    for (std::size_t c = 0; c < base.vals[j].size(); ++c) {
      out.vals[j][c] = vfield.vals[j][c] > gamma ? base.vals[j][c] : 0.0;
    }
  }
  return out;
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double m = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = m * sxx - sx * sx;
  return den > 0.0 ? (m * sxy - sx * sy) / den : 0.0;
}

double cell_v2(const FieldFrame& fr, int cell) {
  return fr.v[cell] * fr.v[cell];
}

double safe_ratio(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? kInf : 0.0;
}

}  // namespace

ScalarField cell_scalar(
    const GradOrField& f,
    const std::function<double(const FieldFrame&, int)>& fn) {
  require_solution(f);
  if (!fn) throw OutOfDomain("cell_scalar needs an evaluator");
  ScalarField out;
  out.g = &f.grid;
  const int cells = cell_count(f.grid);
  out.times.reserve(f.frames.size());
  out.vals.reserve(f.frames.size());
  for (const FieldFrame& fr : f.frames) {
    out.times.push_back(fr.t);
    std::vector<double> row(static_cast<std::size_t>(cells));
    for (int c = 0; c < cells; ++c) row[static_cast<std::size_t>(c)] = fn(fr, c);
    out.vals.push_back(std::move(row));
  }
  return out;
}

double bochner_norm(const ScalarField& f, double s, double r, int k,
                    const ParabolicCylinder& cyl,
                    const CutoffFamily* cutoffs) {
  require_field(f);
  if (!(s >= 1.0) || !(r >= 1.0)) {
    throw OutOfDomain("norm exponents must be >= 1, got s=" + fmt_g(s) +
                      " r=" + fmt_g(r));
  }
  check_cylinder(cyl, *f.g, f.times.front(), f.times.back());
  const Region reg = make_region(*f.g, f.times, cyl, 2.0);
  require_populated(reg, 2.0);
  const int n = f.g->n;
  const double q = cutoffs ? cutoffs->q() : 0.0;
  const bool s_inf = std::isinf(s);
  const bool r_inf = std::isinf(r);

  double acc_t = 0.0, sup_t = 0.0;
  for (int j : reg.frames) {
    const double t = f.times[static_cast<std::size_t>(j)];
    const std::vector<double>& row = f.vals[static_cast<std::size_t>(j)];
    double inner;  // the space average of |f|^r (or the gated max for r=inf)
    if (r_inf) {
      inner = 0.0;
      for (std::size_t i = 0; i < reg.cells.size(); ++i) {
        double w = 1.0;
        if (cutoffs) {
          const double x[2] = {reg.pxs[i], reg.pys[i]};
          w = cutoffs->zeta(k, t, x, n);
        }
        if (w > 0.0) {
          inner = std::fmax(inner, std::fabs(row[static_cast<std::size_t>(
                                       reg.cells[i])]));
        }
      }
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < reg.cells.size(); ++i) {
        double w = 1.0;
        if (cutoffs) {
          const double x[2] = {reg.pxs[i], reg.pys[i]};
          w = powr(cutoffs->zeta(k, t, x, n), q);
        }
        const double a =
            std::fabs(row[static_cast<std::size_t>(reg.cells[i])]);
        sum += powr(a, r) * w;
      }
      inner = sum / static_cast<double>(reg.cells.size());
    }
    if (s_inf) {
      sup_t = std::fmax(sup_t, r_inf ? inner : powr(inner, 1.0 / r));
    } else {
      acc_t += r_inf ? powr(inner, s) : powr(inner, s / r);
    }
  }
  if (s_inf) return sup_t;
  const double mean_t = acc_t / static_cast<double>(reg.frames.size());
  return powr(mean_t, 1.0 / s);
}

DeGiorgiTrace compute_trace(const GradOrField& f, const ParabolicCylinder& cyl,
                            const OrliczPtr& phi, double gamma_inf,
                            int k_max) {
  require_solution(f);
  if (!phi) throw OutOfDomain("trace needs a growth function");
  if (!(gamma_inf > 0.0)) {
    throw OutOfDomain("trace needs a positive top level, got " +
                      fmt_g(gamma_inf));
  }
  if (k_max < 0) throw OutOfDomain("trace needs k_max >= 0");
  const CutoffFamily cut(cyl, phi, k_max);

  const ScalarField vfield =
      cell_scalar(f, [](const FieldFrame& fr, int c) { return fr.v[c]; });
  const ScalarField phiv = cell_scalar(
      f, [&](const FieldFrame& fr, int c) { return phi->value(fr.v[c]); });
  const ScalarField v2 = cell_scalar(f, cell_v2);

  DeGiorgiTrace tr;
  tr.gamma_inf = gamma_inf;
  tr.alpha = cyl.alpha;
  for (int k = 0; k <= k_max; ++k) {
    const double gk = gamma_inf * (1.0 - std::ldexp(1.0, -k));
    tr.gamma.push_back(gk);
    const double yk =
        bochner_norm(masked(phiv, vfield, gk), 1.0, 1.0, k, cyl, &cut);
    const double zk =
        bochner_norm(masked(v2, vfield, gk), 1.0, 1.0, k, cyl, &cut) /
        cyl.alpha;
    tr.Y.push_back(yk);
    tr.Z.push_back(zk);
    tr.W.push_back(yk + zk);
    if (yk + zk == 0.0) {
      tr.stop_k = k;
      break;
    }
  }
  return tr;
}

LevelsetReport verify_levelset_lemma(const DeGiorgiTrace& trace,
                                     const GradOrField& f,
                                     const ParabolicCylinder& cyl,
                                     const OrliczPtr& phi) {
  require_solution(f);
  if (!phi) throw OutOfDomain("level-set check needs a growth function");
  const int levels = static_cast<int>(trace.W.size());
  if (levels < 5 && trace.stop_k < 0) {
    throw OutOfDomain("level-set check needs a trace of depth >= 4");
  }
  if (levels < 1) throw OutOfDomain("empty trace");
  const int n = f.grid.n;
  const double rhat = n >= 3 ? static_cast<double>(n) / (n - 2) : 10.0;
  const CutoffFamily cut(cyl, phi, levels);

  const ScalarField vfield =
      cell_scalar(f, [](const FieldFrame& fr, int c) { return fr.v[c]; });
  const ScalarField phiv = cell_scalar(
      f, [&](const FieldFrame& fr, int c) { return phi->value(fr.v[c]); });
  const ScalarField v2 = cell_scalar(f, cell_v2);

  LevelsetReport rep;
  std::vector<double> fit_k, fit_y;
  for (int k = 0; k + 1 <= levels; ++k) {
    const double wk = trace.W[static_cast<std::size_t>(k)];
    const double gk1 = trace.gamma_inf * (1.0 - std::ldexp(1.0, -(k + 1)));
    LevelsetRow row;
    row.k = k;
    row.lhs1 = bochner_norm(masked(v2, vfield, gk1), kInf, 1.0, k + 1, cyl,
                            &cut) /
               cyl.alpha;
    row.lhs2 =
        bochner_norm(masked(phiv, vfield, gk1), 1.0, rhat, k + 1, cyl, &cut);
    const double growth = std::ldexp(1.0, 3 * k);
    if (wk > 0.0) {
      row.c1 = row.lhs1 / (growth * wk);
      row.c2 = row.lhs2 / (growth * wk);
      row.ck_raw = std::fmax(row.lhs1, row.lhs2) / wk;
      rep.all_vacuous = false;
      rep.max_c = std::fmax(rep.max_c, std::fmax(row.c1, row.c2));
      if (row.ck_raw > 0.0) {
        fit_k.push_back(static_cast<double>(k));
        fit_y.push_back(std::log2(row.ck_raw));
      }
    } else {
      row.vacuous = true;
      row.c1 = row.lhs1 > 0.0 ? kInf : 0.0;
      row.c2 = row.lhs2 > 0.0 ? kInf : 0.0;
    }
    rep.rows.push_back(row);
  }
  rep.beta_fit = fit_k.size() >= 2 ? fit_slope(fit_k, fit_y) : 0.0;
  return rep;
}

double choose_gamma_infty(const GradOrField& f, const ParabolicCylinder& cyl,
                          const OrliczPtr& phi, double kappa_cal) {
  require_solution(f);
  if (!phi) throw OutOfDomain("level selection needs a growth function");
  if (!(kappa_cal > 0.0)) {
    throw OutOfDomain("calibration factor must be positive");
  }
  const int n = f.grid.n;
  const RhoAdmissibility ra = rho_admissible(*phi, n);
  if (!ra.admissible) {
    throw AssumptionViolation(
        "scale reduction needs an almost increasing rho; worst drop ratio " +
        fmt_g(ra.worst_ratio));
  }
  const ScalarField phiv = cell_scalar(
      f, [&](const FieldFrame& fr, int c) { return phi->value(fr.v[c]); });
  const ScalarField v2 = cell_scalar(f, cell_v2);
  const double w0 = bochner_norm(phiv, 1.0, 1.0, 0, cyl, nullptr) +
                    bochner_norm(v2, 1.0, 1.0, 0, cyl, nullptr) / cyl.alpha;
  if (w0 == 0.0) return 0.0;

  const double apow = std::pow(cyl.alpha, 0.5 * (n - 2));
  const auto level_mass = [&](double g) {
    return std::fmin(rho(*phi, n, g) * apow, g * g / cyl.alpha);
  };
  const double target = kappa_cal * w0;
  double hi = 1.0;
  while (level_mass(hi) < target) {
    hi *= 2.0;
    if (hi > 1e300) {
      throw NonConvergence("level selection failed to bracket the target " +
                           fmt_g(target));
    }
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (level_mass(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MainBoundReport verify_main_bound(const GradOrField& f,
                                  const ParabolicCylinder& cyl,
                                  const OrliczPtr& phi) {
  require_solution(f);
  if (!phi) throw OutOfDomain("sup bound needs a growth function");
  const int n = f.grid.n;
  const RhoAdmissibility ra = rho_admissible(*phi, n);
  if (!ra.admissible) {
    throw AssumptionViolation(
        "scale reduction needs an almost increasing rho; worst drop ratio " +
        fmt_g(ra.worst_ratio));
  }
  const ScalarField phiv = cell_scalar(
      f, [&](const FieldFrame& fr, int c) { return phi->value(fr.v[c]); });
  const ScalarField v2 = cell_scalar(f, cell_v2);
  check_cylinder(cyl, f.grid, phiv.times.front(), phiv.times.back());
  const Region reg = make_region(f.grid, phiv.times, cyl, 1.0);
  require_populated(reg, 1.0);

  double sup_rho = 0.0, sup_v2 = 0.0;
  for (int j : reg.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (int c : reg.cells) {
      sup_rho = std::fmax(sup_rho, rho(*phi, n, fr.v[c]));
      sup_v2 = std::fmax(sup_v2, fr.v[c] * fr.v[c]);
    }
  }
  MainBoundReport rep;
  const double apow = std::pow(cyl.alpha, 0.5 * (n - 2));
  rep.lhs = std::fmin(sup_rho * apow, sup_v2 / cyl.alpha);
  rep.rhs = bochner_norm(v2, 1.0, 1.0, 0, cyl, nullptr) / cyl.alpha +
            bochner_norm(phiv, 1.0, 1.0, 0, cyl, nullptr);
  rep.ratio = safe_ratio(rep.lhs, rep.rhs);
  return rep;
}

DibCompareRow dibenedetto_compare(const GradOrField& f,
                                  const ParabolicCylinder& cyl, double p,
                                  double amplitude) {
  require_solution(f);
  if (!(p > 1.0)) throw OutOfDomain("power comparison needs p > 1");
  DibCompareRow row;
  row.amplitude = amplitude;
  if (p == 2.0) {
    row.skipped = true;
    row.notice = "scaling pad alpha^(p/(2-p)) is undefined at p = 2";
    return row;
  }
  const int n = f.grid.n;
  const double nu2 = n * (p - 2.0) + 4.0;
  const ScalarField vp = cell_scalar(f, [&](const FieldFrame& fr, int c) {
    return std::pow(fr.v[c], p);
  });
  const ScalarField v2 = cell_scalar(f, cell_v2);
  check_cylinder(cyl, f.grid, vp.times.front(), vp.times.back());
  const Region reg = make_region(f.grid, vp.times, cyl, 1.0);
  require_populated(reg, 1.0);

  double sup_v = 0.0;
  for (int j : reg.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (int c : reg.cells) sup_v = std::fmax(sup_v, fr.v[c]);
  }
  const double apow = std::pow(cyl.alpha, 0.5 * (n - 2));
  row.lhs = std::fmin(std::pow(sup_v, 0.5 * nu2) * apow,
                      sup_v * sup_v / cyl.alpha);
  row.rhs_new = bochner_norm(v2, 1.0, 1.0, 0, cyl, nullptr) / cyl.alpha +
                bochner_norm(vp, 1.0, 1.0, 0, cyl, nullptr);
  row.rhs_dib = std::fmax(row.rhs_new, std::pow(cyl.alpha, p / (2.0 - p)));
  return row;
}

CaccioppoliReport caccioppoli_check(const GradOrField& f,
                                    const ParabolicCylinder& cyl,
                                    const OrliczPtr& phi, const FChoice& fc,
                                    const CutoffFamily& cutoffs, int k) {
  require_solution(f);
  if (!phi) throw OutOfDomain("energy check needs a growth function");
  const ParabolicCylinder& own = cutoffs.cylinder();
  if (own.t0 != cyl.t0 || own.x0[0] != cyl.x0[0] || own.x0[1] != cyl.x0[1] ||
      own.R != cyl.R || own.alpha != cyl.alpha) {
    throw OutOfDomain("cutoff family was built for a different cylinder");
  }
  if (fc.kind == FChoice::Custom && !fc.fn) {
    throw OutOfDomain("custom weight needs a function");
  }
  const int n = f.grid.n;
  const int N = f.grid.N;
  std::vector<double> times;
  times.reserve(f.frames.size());
  for (const FieldFrame& fr : f.frames) times.push_back(fr.t);
  check_cylinder(cyl, f.grid, times.front(), times.back());
  const Region reg1 = make_region(f.grid, times, cyl, 1.0);
  const Region reg2 = make_region(f.grid, times, cyl, 2.0);
  require_populated(reg1, 1.0);
  require_populated(reg2, 2.0);

  // Weight f(v) and its potential H with H'(t) = t f(t).  The custom branch
  // tabulates H by the trapezoid rule up to the field's range.
  std::vector<double> htab;
  double hstep = 0.0;
  if (fc.kind == FChoice::Custom) {
    double vmax = 0.0;
    for (const FieldFrame& fr : f.frames) {
      for (double v : fr.v) vmax = std::fmax(vmax, v);
    }
    const int m = 8192;
    hstep = vmax > 0.0 ? vmax / m : 1.0;
    htab.assign(m + 1, 0.0);
    double prev = 0.0;
    for (int i = 1; i <= m; ++i) {
      const double t = i * hstep;
      const double cur = t * fc.fn(t);
      htab[i] = htab[i - 1] + 0.5 * (prev + cur) * hstep;
      prev = cur;
    }
  }
  const auto fweight = [&](double v) -> double {
    switch (fc.kind) {
      case FChoice::Constant: return 1.0;
      case FChoice::Indicator: return v > fc.gamma ? 1.0 : 0.0;
      default: return fc.fn(v);
    }
  };
  const auto hpot = [&](double v) -> double {
    switch (fc.kind) {
      case FChoice::Constant: return 0.5 * v * v;
      case FChoice::Indicator: return 0.5 * level_H(fc.gamma, v);
      default: {
        const double pos = v / hstep;
        const int i = std::min(static_cast<int>(pos),
                               static_cast<int>(htab.size()) - 2);
        const double frac = pos - i;
        return htab[i] + frac * (htab[i + 1] - htab[i]);
      }
    }
  };

  const double q = cutoffs.q();
  const double rr = cyl.R * cyl.R;
  CaccioppoliReport rep;

  // sup over inner-window snapshots of the weighted slice average of H(v).
  for (int j : reg1.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    double sum = 0.0;
    for (std::size_t i = 0; i < reg1.cells.size(); ++i) {
      const double x[2] = {reg1.pxs[i], reg1.pys[i]};
      const double z = cutoffs.zeta(k, fr.t, x, n);
      sum += hpot(fr.v[reg1.cells[i]]) * powr(z, q);
    }
    rep.lhs_sup = std::fmax(
        rep.lhs_sup,
        sum / static_cast<double>(reg1.cells.size()) / cyl.alpha);
  }

  double acc = 0.0;
  for (int j : reg1.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < reg1.cells.size(); ++i) {
      const int c = reg1.cells[i];
      const double x[2] = {reg1.pxs[i], reg1.pys[i]};
      const double z = cutoffs.zeta(k, fr.t, x, n);
      acc += fr.gradVsq[c] * powr(z, q) * fweight(fr.v[c]);
    }
  }
  rep.lhs_gradv = rr * acc /
                  static_cast<double>(reg1.cells.size()) /
                  static_cast<double>(reg1.frames.size());

  const double gsup = cutoffs.grad_sup(k);
  double acc1 = 0.0, acc2 = 0.0;
  for (int j : reg2.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < reg2.cells.size(); ++i) {
      const int c = reg2.cells[i];
      double vsq = 0.0;
      for (int slot = 0; slot < N * n; ++slot) {
        const double a = fr.V[static_cast<std::size_t>(c) * N * n + slot];
        vsq += a * a;
      }
      const double x[2] = {reg2.pxs[i], reg2.pys[i]};
      acc1 += vsq * fweight(fr.v[c]);
      acc2 += hpot(fr.v[c]) * powr(cutoffs.zeta(k, fr.t, x, n), q - 1.0) *
              std::fabs(cutoffs.dzeta_dt(k, fr.t, x, n));
    }
  }
  const double norm2 = static_cast<double>(reg2.cells.size()) *
                       static_cast<double>(reg2.frames.size());
  rep.rhs1 = rr * gsup * gsup * acc1 / norm2;
  rep.rhs2 = rr * acc2 / norm2;
  const double lhs = rep.lhs_sup + rep.lhs_gradv;
  const double rhs = rep.rhs1 + rep.rhs2;
  rep.vacuous = rhs == 0.0;
  rep.c_emp = safe_ratio(lhs, rhs);

  if (fc.kind != FChoice::Indicator) return rep;

  // Truncated form: G = level_G, H = level_H, gradient of G(v) eta^{q/2} by
  // central differences across cells.
  rep.has_truncated = true;
  const double gamma = fc.gamma;
  for (int j : reg1.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    double sum = 0.0;
    for (std::size_t i = 0; i < reg1.cells.size(); ++i) {
      sum += level_H(gamma, fr.v[reg1.cells[i]]);
    }
    rep.cor_lhs_sup = std::fmax(
        rep.cor_lhs_sup,
        sum / static_cast<double>(reg1.cells.size()) / cyl.alpha);
  }

  const double h = grid_h(f.grid);
  const int ncy = n == 2 ? f.grid.cells[1] : 1;
  std::vector<double> prod(static_cast<std::size_t>(cell_count(f.grid)));
  double accg = 0.0;
  for (int j : reg1.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    const int ncx = f.grid.cells[0];
    double xc[2] = {0.0, 0.0};
    for (int cx = 0; cx < ncx; ++cx) {
      for (int cy = 0; cy < ncy; ++cy) {
        cell_center(f.grid, cx, cy, xc);
        if (n == 1) xc[1] = 0.0;
        const int c = cell_index(f.grid, cx, cy);
        prod[static_cast<std::size_t>(c)] =
            level_G(*phi, gamma, fr.v[c]) *
            powr(cutoffs.zeta(k, fr.t, xc, n), 0.5 * q);
      }
    }
    for (std::size_t i = 0; i < reg1.cells.size(); ++i) {
      const int cx = reg1.cxs[i], cy = reg1.cys[i];
      double gg = 0.0;
      const double dx = (prod[cell_index(f.grid, cx + 1, cy)] -
                         prod[cell_index(f.grid, cx - 1, cy)]) /
                        (2.0 * h);
      gg += dx * dx;
      if (n == 2) {
        const double dy = (prod[cell_index(f.grid, cx, cy + 1)] -
                           prod[cell_index(f.grid, cx, cy - 1)]) /
                          (2.0 * h);
        gg += dy * dy;
      }
      accg += gg;
    }
  }
  rep.cor_lhs_grad = rr * accg /
                     static_cast<double>(reg1.cells.size()) /
                     static_cast<double>(reg1.frames.size());

  double accr1 = 0.0, accr2 = 0.0;
  for (int j : reg2.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < reg2.cells.size(); ++i) {
      const int c = reg2.cells[i];
      if (fr.v[c] > gamma) accr1 += phi->value(fr.v[c]);
      const double x[2] = {reg2.pxs[i], reg2.pys[i]};
      accr2 += level_H(gamma, fr.v[c]) *
               powr(cutoffs.zeta(k, fr.t, x, n), q - 1.0) *
               std::fabs(cutoffs.dzeta_dt(k, fr.t, x, n));
    }
  }
  rep.cor_rhs1 = rr * gsup * gsup * accr1 / norm2;
  rep.cor_rhs2 = rr * accr2 / norm2;
  const double clhs = rep.cor_lhs_sup + rep.cor_lhs_grad;
  const double crhs = rep.cor_rhs1 + rep.cor_rhs2;
  rep.cor_vacuous = crhs == 0.0;
  rep.cor_c_emp = safe_ratio(clhs, crhs);
  return rep;
}

StationaryReport stationary_check(const GradOrField& f, const Ball& ball,
                                  const OrliczPtr& phi, int k_max,
                                  double kappa_cal) {
  require_solution(f);
  if (!phi) throw OutOfDomain("stationary check needs a growth function");
  if (k_max < 0) throw OutOfDomain("stationary check needs k_max >= 0");
  if (!(kappa_cal > 0.0)) {
    throw OutOfDomain("calibration factor must be positive");
  }
  if (!(ball.R > 0.0)) throw AssumptionViolation("ball needs R > 0");
  const GridSpec& g = f.grid;
  const double h = grid_h(g);
  for (int d = 0; d < g.n; ++d) {
    const double tol = 1e-12 * g.extent[d];
    if (ball.x0[d] - 2.0 * ball.R < 2.0 * h - tol ||
        ball.x0[d] + 2.0 * ball.R > g.extent[d] - 2.0 * h + tol) {
      throw OutOfDomain("double ball exceeds the grid margin on axis " +
                        std::to_string(d));
    }
  }
  const FieldFrame& fr = f.frames.back();

  // Member cells of B_R and B_2R, plus precomputed radius per B_2R cell.
  std::vector<int> inner, outer;
  std::vector<double> radius;
  const int ncx = g.cells[0];
  const int ncy = g.n == 2 ? g.cells[1] : 1;
  double c[2] = {0.0, 0.0};
  for (int cx = 0; cx < ncx; ++cx) {
    for (int cy = 0; cy < ncy; ++cy) {
      cell_center(g, cx, cy, c);
      double ss = 0.0;
      for (int d = 0; d < g.n; ++d) {
        ss += (c[d] - ball.x0[d]) * (c[d] - ball.x0[d]);
      }
      const double r = std::sqrt(ss);
      if (r <= 2.0 * ball.R) {
        outer.push_back(cell_index(g, cx, cy));
        radius.push_back(r);
        if (r <= ball.R) inner.push_back(cell_index(g, cx, cy));
      }
    }
  }
  if (inner.empty() || outer.empty()) {
    throw OutOfDomain("no cell centers inside the ball");
  }

  StationaryReport rep;
  for (int cc : inner) rep.lhs = std::fmax(rep.lhs, phi->value(fr.v[cc]));
  double sum = 0.0;
  for (int cc : outer) sum += phi->value(fr.v[cc]);
  rep.rhs = sum / static_cast<double>(outer.size());
  rep.ratio = safe_ratio(rep.lhs, rep.rhs);

  const double q = select_q(*phi).q;
  std::vector<double> sqv(outer.size());
  double smax = 0.0;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    const double v = fr.v[outer[i]];
    sqv[i] = std::sqrt(phi->deriv(v) * v);
    smax = std::fmax(smax, sqv[i]);
  }

  // Shrinking ball cutoff: 1 inside (1+2^-k-1) R, 0 outside (1+2^-k) R.
  const auto eta_q = [&](int k, double r) {
    const double out_r = (1.0 + std::ldexp(1.0, -k)) * ball.R;
    const double in_r = (1.0 + std::ldexp(1.0, -k - 1)) * ball.R;
    const double s = (out_r - r) / (out_r - in_r);
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return powr(((6.0 * s - 15.0) * s + 10.0) * s * s * s, q);
  };
  const auto level_u = [&](double cinf, int k) {
    const double ck = cinf * (1.0 + std::ldexp(1.0, -k));
    double acc = 0.0;
    for (std::size_t i = 0; i < outer.size(); ++i) {
      const double gpos = std::fmax(sqv[i] - ck, 0.0);
      acc += gpos * gpos * eta_q(k, radius[i]);
    }
    return acc / static_cast<double>(outer.size());
  };

  if (smax == 0.0 || level_u(0.0, 0) == 0.0) {
    rep.vacuous = true;
    rep.U.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
    rep.gamma_levels.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
    return rep;
  }

  // Calibrate c_inf^2 = kappa_cal U_0(c_inf); the gap c^2 - kappa U_0(c) is
  // increasing, negative at 0 and positive once every level empties.
  double lo = 0.0, hi = smax + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gap = mid * mid - kappa_cal * level_u(mid, 0);
    (gap < 0.0 ? lo : hi) = mid;
  }
  rep.c_inf = 0.5 * (lo + hi);
  for (int k = 0; k <= k_max; ++k) {
    rep.U.push_back(level_u(rep.c_inf, k));
    const double ck = rep.c_inf * (1.0 + std::ldexp(1.0, -k));
    rep.gamma_levels.push_back(invert_phiprime_t(*phi, ck));
  }
  return rep;
}

W21Report w21_check(const GradOrField& f, const ParabolicCylinder& cyl,
                    const OrliczPtr& phi) {
  require_solution(f);
  if (!phi) throw OutOfDomain("second-difference check needs a growth function");
  const GridSpec& g = f.grid;
  const int n = g.n, N = g.N;
  std::vector<double> times;
  times.reserve(f.frames.size());
  for (const FieldFrame& fr : f.frames) times.push_back(fr.t);
  check_cylinder(cyl, g, times.front(), times.back());

  int pick = 0;
  double best = kInf;
  for (int j = 0; j < static_cast<int>(times.size()); ++j) {
    const double d = std::fabs(times[j] - cyl.t0);
    if (d < best) {
      best = d;
      pick = j;
    }
  }
  const FieldFrame& fr = f.frames[static_cast<std::size_t>(pick)];
  const Snapshot& snap = f.snaps[static_cast<std::size_t>(pick)];
  const Region reg = make_region(g, times, cyl, 1.0);
  if (reg.cells.empty()) throw OutOfDomain("no cell centers inside the ball");

  const double h = grid_h(g);
  const auto uval = [&](int ix, int iy, int comp) {
    return snap.u[static_cast<std::size_t>(node_index(g, ix, iy)) * N + comp];
  };
  const auto aval = [&](int cell, int comp, int axis) {
    const double v = fr.v[cell];
    const double coef = v > 0.0 ? phi->deriv(v) / v : phi->deriv2(0.0);
    return coef *
           fr.grad[(static_cast<std::size_t>(cell) * N + comp) * n + axis];
  };

  W21Report rep;
  double acc1 = 0.0, acc2 = 0.0, accv = 0.0, accphi = 0.0;
  for (std::size_t i = 0; i < reg.cells.size(); ++i) {
    const int cx = reg.cxs[i], cy = reg.cys[i];
    const int ix = cx + 1, iy = cy + 1;  // the cell-center node
    double hess = 0.0;
    for (int comp = 0; comp < N; ++comp) {
      const double uxx =
          (uval(ix + 1, iy, comp) - 2.0 * uval(ix, iy, comp) +
           uval(ix - 1, iy, comp)) /
          (h * h);
      hess += uxx * uxx;
      if (n == 2) {
        const double uyy =
            (uval(ix, iy + 1, comp) - 2.0 * uval(ix, iy, comp) +
             uval(ix, iy - 1, comp)) /
            (h * h);
        const double uxy =
            (uval(ix + 1, iy + 1, comp) - uval(ix + 1, iy - 1, comp) -
             uval(ix - 1, iy + 1, comp) + uval(ix - 1, iy - 1, comp)) /
            (4.0 * h * h);
        hess += uyy * uyy + 2.0 * uxy * uxy;
      }
    }
    acc1 += std::sqrt(hess);

    double grada = 0.0;
    for (int comp = 0; comp < N; ++comp) {
      for (int axis = 0; axis < n; ++axis) {
        const double dax = (aval(cell_index(g, cx + 1, cy), comp, axis) -
                            aval(cell_index(g, cx - 1, cy), comp, axis)) /
                           (2.0 * h);
        grada += dax * dax;
        if (n == 2) {
          const double day = (aval(cell_index(g, cx, cy + 1), comp, axis) -
                              aval(cell_index(g, cx, cy - 1), comp, axis)) /
                             (2.0 * h);
          grada += day * day;
        }
      }
    }
    acc2 += std::sqrt(grada);

    const int cc = reg.cells[i];
    accv += fr.gradVsq[cc];
    accphi += phi->value(fr.v[cc]);
  }
  const double m = static_cast<double>(reg.cells.size());
  rep.lhs1 = acc1 / m;
  rep.lhs2 = acc2 / m;
  rep.rhs = accv / m + accphi / m + conjugate(*phi, 1.0);
  rep.rhs_flux = accv / m + accphi / m + phi->value(1.0);
  rep.ratio1 = safe_ratio(rep.lhs1, rep.rhs);
  rep.ratio2 = safe_ratio(rep.lhs2, rep.rhs_flux);
  return rep;
}

HoelderReport hoelder_diagnostic(const GradOrField& f,
                                 const ParabolicCylinder& cyl,
                                 const OrliczPtr& phi) {
  require_solution(f);
  if (!phi) throw OutOfDomain("oscillation fit needs a growth function");
  const GridSpec& g = f.grid;
  const int n = g.n, N = g.N;
  std::vector<double> times;
  times.reserve(f.frames.size());
  for (const FieldFrame& fr : f.frames) times.push_back(fr.t);
  check_cylinder(cyl, g, times.front(), times.back());

  HoelderReport rep;
  const Region reg1 = make_region(g, times, cyl, 1.0);
  require_populated(reg1, 1.0);
  double sup_v = 0.0;
  for (int j : reg1.frames) {
    const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
    for (int c : reg1.cells) sup_v = std::fmax(sup_v, fr.v[c]);
  }
  if (sup_v == 0.0) {
    rep.unresolved = true;
    return rep;
  }
  rep.kappa_at_sup = kappa(*phi, sup_v);

  const double lams[4] = {0.5, 0.5 / std::sqrt(2.0), 0.25,
                          0.25 / std::sqrt(2.0)};
  const double floor = 1e-10 * (1.0 + sup_v);
  std::vector<double> xs, ys;
  for (double lam : lams) {
    const Region reg = make_region(g, times, cyl, lam);
    rep.radii.push_back(lam * cyl.R);
    if (reg.cells.empty() || reg.frames.empty()) {
      rep.oscs.push_back(0.0);
      rep.unresolved = true;
      continue;
    }
    double osc2 = 0.0;
    for (int slot = 0; slot < N * n; ++slot) {
      double lo = kInf, hi = -kInf;
      for (int j : reg.frames) {
        const FieldFrame& fr = f.frames[static_cast<std::size_t>(j)];
        for (int c : reg.cells) {
          const double a =
              fr.grad[static_cast<std::size_t>(c) * N * n + slot];
          lo = std::fmin(lo, a);
          hi = std::fmax(hi, a);
        }
      }
      osc2 += (hi - lo) * (hi - lo);
    }
    const double osc = std::sqrt(osc2);
    rep.oscs.push_back(osc);
    if (osc <= floor) {
      rep.unresolved = true;
    } else {
      xs.push_back(std::log(lam * rep.kappa_at_sup));
      ys.push_back(std::log(osc));
    }
  }
  if (xs.size() < 2) {
    rep.unresolved = true;
    return rep;
  }
  rep.mu_fit = fit_slope(xs, ys);
  return rep;
}

double level_inflation_constant(const OrliczPtr& phi, int h_kind,
                                double gamma_inf, int k, int samples) {
  if (h_kind == 1 && !phi) {
    throw OutOfDomain("derivative-based level scale needs a growth function");
  }
  if (!(gamma_inf > 0.0)) throw OutOfDomain("needs a positive top level");
  if (k < 0 || samples < 2) throw OutOfDomain("bad sweep parameters");
  const auto hfun = [&](double t) {
    return h_kind == 0 ? t * t : std::sqrt(phi->deriv(t) * t);
  };
  const double gk = gamma_inf * (1.0 - std::ldexp(1.0, -k));
  const double gk1 = gamma_inf * (1.0 - std::ldexp(1.0, -(k + 1)));
  const double hk = hfun(gk);
  const double tmax = 4.0 * gamma_inf;
  const double scale = std::ldexp(1.0, k + 1);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    // Quadratic clustering toward the lower level edge, where the bound
    // is tightest.
    const double frac = static_cast<double>(i) / (samples - 1);
    const double t = i == 0 ? gk1 * (1.0 + 1e-12)
                            : gk1 + (tmax - gk1) * frac * frac;
    const double gap = hfun(t) - hk;
    if (gap > 0.0) worst = std::fmax(worst, hfun(t) / (scale * gap));
  }
  return worst;
}

}  // namespace phicaloric
