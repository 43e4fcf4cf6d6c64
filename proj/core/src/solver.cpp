#include <phicaloric/solver.hpp>

#include <phicaloric/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace phicaloric {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Mesh {
  int n, N, ncx, ncy;
  int nnx, nny, nodes;
  double h;
  std::vector<double> sx, sy;
  std::vector<char> interior;  // per node

  explicit Mesh(const GridSpec& g)
      : n(g.n), N(g.N), ncx(g.cells[0]), ncy(g.n == 2 ? g.cells[1] : 1) {
    h = grid_h(g);
    nnx = ncx + 2;
    nny = n == 2 ? ncy + 2 : 1;
    nodes = n == 2 ? nnx * nny : nnx;
    sx = axis_segment_lengths(g, 0);
    if (n == 2) sy = axis_segment_lengths(g, 1);
    interior.assign(static_cast<size_t>(nodes), 0);
    for (int ix = 1; ix <= ncx; ++ix) {
      if (n == 1) {
        interior[static_cast<size_t>(ix)] = 1;
      } else {
        for (int iy = 1; iy <= ncy; ++iy)
          interior[static_cast<size_t>(ix * nny + iy)] = 1;
      }
    }
  }

  int nidx(int ix, int iy) const { return n == 1 ? ix : ix * nny + iy; }
};

// Coefficients of one linearization point, per energy term (segment in 1-D,
// rectangle edge-combination in 2-D).
struct LinPoint {
  std::vector<double> c;   // phi'(s)/s, extended by phi''(0) at s=0
  std::vector<double> dd;  // phi''(s)
  std::vector<double> s;
  std::vector<double> gx;  // terms*N
  std::vector<double> gy;  // terms*N, 2-D only
};

// P1-type energy on the node mesh.  In 1-D the terms are the segments
// (including the half-length boundary ones).  In 2-D each rectangle between
// neighboring node columns/rows contributes the average of the four
// edge-difference gradients: with x-differences taken along the bottom/top
// edges and y-differences along the left/right edges, the energy is
// (ax*ay/4) * sum over the four (x-edge, y-edge) pairs of phi(|G|_F).
// This is the diagonal-averaged P1 triangulation energy in closed form and
// reduces to the 5-point scheme exactly when phi is quadratic.
class Scheme {
 public:
  Scheme(const GridSpec& g, OrliczPtr phi) : m_(g), phi_(std::move(phi)) {}

  const Mesh& mesh() const { return m_; }

  double coef_c(double s) const {
    return s > 0.0 ? phi_->deriv(s) / s : phi_->deriv2(0.0);
  }

  double energy(const std::vector<double>& u) const {
    double e = 0.0;
    if (m_.n == 1) {
      for (int k = 0; k <= m_.ncx; ++k) {
        const double len = m_.sx[static_cast<size_t>(k)];
        double s2 = 0.0;
        for (int c = 0; c < m_.N; ++c) {
          const double d =
              (u[dof(k + 1, 0, c)] - u[dof(k, 0, c)]) / len;
          s2 += d * d;
        }
        e += len * phi_->value(std::sqrt(s2));
      }
      return e;
    }
    for (int rx = 0; rx <= m_.ncx; ++rx) {
      const double ax = m_.sx[static_cast<size_t>(rx)];
      for (int ry = 0; ry <= m_.ncy; ++ry) {
        const double ay = m_.sy[static_cast<size_t>(ry)];
        const double w = 0.25 * ax * ay;
        const int b00 = dof(rx, ry, 0), b10 = dof(rx + 1, ry, 0);
        const int b01 = dof(rx, ry + 1, 0), b11 = dof(rx + 1, ry + 1, 0);
        for (int xe = 0; xe < 2; ++xe) {
          const int xa = xe ? b01 : b00, xb = xe ? b11 : b10;
          for (int ye = 0; ye < 2; ++ye) {
            const int ya = ye ? b10 : b00, yb = ye ? b11 : b01;
            double s2 = 0.0;
            for (int c = 0; c < m_.N; ++c) {
              const double gx = (u[static_cast<size_t>(xb + c)] -
                                 u[static_cast<size_t>(xa + c)]) / ax;
              const double gy = (u[static_cast<size_t>(yb + c)] -
                                 u[static_cast<size_t>(ya + c)]) / ay;
              s2 += gx * gx + gy * gy;
            }
            e += w * phi_->value(std::sqrt(s2));
          }
        }
      }
    }
    return e;
  }

  // Adds dE/du into r at interior dofs; boundary entries are left alone.
  void add_grad(const std::vector<double>& u, std::vector<double>* r) const {
    if (m_.n == 1) {
      for (int k = 0; k <= m_.ncx; ++k) {
        const double len = m_.sx[static_cast<size_t>(k)];
        double g[3], s2 = 0.0;
        for (int c = 0; c < m_.N; ++c) {
          g[c] = (u[dof(k + 1, 0, c)] - u[dof(k, 0, c)]) / len;
          s2 += g[c] * g[c];
        }
        const double cc = coef_c(std::sqrt(s2));
        for (int c = 0; c < m_.N; ++c) {
          const double flux = cc * g[c];  // len * cc * g / len
          if (m_.interior[static_cast<size_t>(k + 1)])
            (*r)[dof(k + 1, 0, c)] += flux;
          if (m_.interior[static_cast<size_t>(k)])
            (*r)[dof(k, 0, c)] -= flux;
        }
      }
      return;
    }
    for (int rx = 0; rx <= m_.ncx; ++rx) {
      const double ax = m_.sx[static_cast<size_t>(rx)];
      for (int ry = 0; ry <= m_.ncy; ++ry) {
        const double ay = m_.sy[static_cast<size_t>(ry)];
        const double w = 0.25 * ax * ay;
        const int n00 = m_.nidx(rx, ry), n10 = m_.nidx(rx + 1, ry);
        const int n01 = m_.nidx(rx, ry + 1), n11 = m_.nidx(rx + 1, ry + 1);
        for (int xe = 0; xe < 2; ++xe) {
          const int xa = xe ? n01 : n00, xb = xe ? n11 : n10;
          for (int ye = 0; ye < 2; ++ye) {
            const int ya = ye ? n10 : n00, yb = ye ? n11 : n01;
            double gx[3], gy[3], s2 = 0.0;
            for (int c = 0; c < m_.N; ++c) {
              gx[c] = (u[static_cast<size_t>(xb * m_.N + c)] -
                       u[static_cast<size_t>(xa * m_.N + c)]) / ax;
              gy[c] = (u[static_cast<size_t>(yb * m_.N + c)] -
                       u[static_cast<size_t>(ya * m_.N + c)]) / ay;
              s2 += gx[c] * gx[c] + gy[c] * gy[c];
            }
            const double coeff = w * coef_c(std::sqrt(s2));
            for (int c = 0; c < m_.N; ++c) {
              const double fx = coeff * gx[c] / ax;
              const double fy = coeff * gy[c] / ay;
              if (m_.interior[static_cast<size_t>(xb)])
                (*r)[static_cast<size_t>(xb * m_.N + c)] += fx;
              if (m_.interior[static_cast<size_t>(xa)])
                (*r)[static_cast<size_t>(xa * m_.N + c)] -= fx;
              if (m_.interior[static_cast<size_t>(yb)])
                (*r)[static_cast<size_t>(yb * m_.N + c)] += fy;
              if (m_.interior[static_cast<size_t>(ya)])
                (*r)[static_cast<size_t>(ya * m_.N + c)] -= fy;
            }
          }
        }
      }
    }
  }

  LinPoint linearize(const std::vector<double>& u) const {
    LinPoint lp;
    if (m_.n == 1) {
      const size_t terms = static_cast<size_t>(m_.ncx) + 1;
      lp.c.resize(terms);
      lp.dd.resize(terms);
      lp.s.resize(terms);
      lp.gx.resize(terms * m_.N);
      for (int k = 0; k <= m_.ncx; ++k) {
        const double len = m_.sx[static_cast<size_t>(k)];
        double s2 = 0.0;
        for (int c = 0; c < m_.N; ++c) {
          const double g = (u[dof(k + 1, 0, c)] - u[dof(k, 0, c)]) / len;
          lp.gx[static_cast<size_t>(k) * m_.N + c] = g;
          s2 += g * g;
        }
        const double s = std::sqrt(s2);
        lp.s[static_cast<size_t>(k)] = s;
        lp.c[static_cast<size_t>(k)] = coef_c(s);
        lp.dd[static_cast<size_t>(k)] = phi_->deriv2(s);
      }
      return lp;
    }
    const size_t terms =
        static_cast<size_t>(m_.ncx + 1) * static_cast<size_t>(m_.ncy + 1) * 4;
    lp.c.resize(terms);
    lp.dd.resize(terms);
    lp.s.resize(terms);
    lp.gx.resize(terms * m_.N);
    lp.gy.resize(terms * m_.N);
    size_t t = 0;
    for (int rx = 0; rx <= m_.ncx; ++rx) {
      const double ax = m_.sx[static_cast<size_t>(rx)];
      for (int ry = 0; ry <= m_.ncy; ++ry) {
        const double ay = m_.sy[static_cast<size_t>(ry)];
        const int n00 = m_.nidx(rx, ry), n10 = m_.nidx(rx + 1, ry);
        const int n01 = m_.nidx(rx, ry + 1), n11 = m_.nidx(rx + 1, ry + 1);
        for (int xe = 0; xe < 2; ++xe) {
          const int xa = xe ? n01 : n00, xb = xe ? n11 : n10;
          for (int ye = 0; ye < 2; ++ye, ++t) {
            const int ya = ye ? n10 : n00, yb = ye ? n11 : n01;
            double s2 = 0.0;
            for (int c = 0; c < m_.N; ++c) {
              const double gx = (u[static_cast<size_t>(xb * m_.N + c)] -
                                 u[static_cast<size_t>(xa * m_.N + c)]) / ax;
              const double gy = (u[static_cast<size_t>(yb * m_.N + c)] -
                                 u[static_cast<size_t>(ya * m_.N + c)]) / ay;
              lp.gx[t * m_.N + c] = gx;
              lp.gy[t * m_.N + c] = gy;
              s2 += gx * gx + gy * gy;
            }
            const double s = std::sqrt(s2);
            lp.s[t] = s;
            lp.c[t] = coef_c(s);
            lp.dd[t] = phi_->deriv2(s);
          }
        }
      }
    }
    return lp;
  }

  // out += E''(lin point) * w.  Direction w must vanish on boundary dofs.
  // picard drops the rank-one curvature part, leaving the frozen-coefficient
  // operator.
  void hess_mul(const LinPoint& lp, const std::vector<double>& w,
                std::vector<double>* out, bool picard) const {
    if (m_.n == 1) {
      for (int k = 0; k <= m_.ncx; ++k) {
        const size_t t = static_cast<size_t>(k);
        const double len = m_.sx[t];
        const double cc = lp.c[t], s = lp.s[t];
        const double fac =
            (!picard && s > 0.0) ? (lp.dd[t] - cc) / (s * s) : 0.0;
        double dg[3], inner = 0.0;
        for (int c = 0; c < m_.N; ++c) {
          dg[c] = (w[dof(k + 1, 0, c)] - w[dof(k, 0, c)]) / len;
          inner += lp.gx[t * m_.N + c] * dg[c];
        }
        for (int c = 0; c < m_.N; ++c) {
          const double flux = cc * dg[c] + fac * inner * lp.gx[t * m_.N + c];
          if (m_.interior[static_cast<size_t>(k + 1)])
            (*out)[dof(k + 1, 0, c)] += flux;
          if (m_.interior[static_cast<size_t>(k)])
            (*out)[dof(k, 0, c)] -= flux;
        }
      }
      return;
    }
    size_t t = 0;
    for (int rx = 0; rx <= m_.ncx; ++rx) {
      const double ax = m_.sx[static_cast<size_t>(rx)];
      for (int ry = 0; ry <= m_.ncy; ++ry) {
        const double ay = m_.sy[static_cast<size_t>(ry)];
        const double wgt = 0.25 * ax * ay;
        const int n00 = m_.nidx(rx, ry), n10 = m_.nidx(rx + 1, ry);
        const int n01 = m_.nidx(rx, ry + 1), n11 = m_.nidx(rx + 1, ry + 1);
        for (int xe = 0; xe < 2; ++xe) {
          const int xa = xe ? n01 : n00, xb = xe ? n11 : n10;
          for (int ye = 0; ye < 2; ++ye, ++t) {
            const int ya = ye ? n10 : n00, yb = ye ? n11 : n01;
            const double cc = lp.c[t], s = lp.s[t];
            const double fac =
                (!picard && s > 0.0) ? (lp.dd[t] - cc) / (s * s) : 0.0;
            double dgx[3], dgy[3], inner = 0.0;
            for (int c = 0; c < m_.N; ++c) {
              dgx[c] = (w[static_cast<size_t>(xb * m_.N + c)] -
                        w[static_cast<size_t>(xa * m_.N + c)]) / ax;
              dgy[c] = (w[static_cast<size_t>(yb * m_.N + c)] -
                        w[static_cast<size_t>(ya * m_.N + c)]) / ay;
              inner += lp.gx[t * m_.N + c] * dgx[c] +
                       lp.gy[t * m_.N + c] * dgy[c];
            }
            for (int c = 0; c < m_.N; ++c) {
              const double fx =
                  wgt * (cc * dgx[c] + fac * inner * lp.gx[t * m_.N + c]) / ax;
              const double fy =
                  wgt * (cc * dgy[c] + fac * inner * lp.gy[t * m_.N + c]) / ay;
              if (m_.interior[static_cast<size_t>(xb)])
                (*out)[static_cast<size_t>(xb * m_.N + c)] += fx;
              if (m_.interior[static_cast<size_t>(xa)])
                (*out)[static_cast<size_t>(xa * m_.N + c)] -= fx;
              if (m_.interior[static_cast<size_t>(yb)])
                (*out)[static_cast<size_t>(yb * m_.N + c)] += fy;
              if (m_.interior[static_cast<size_t>(ya)])
                (*out)[static_cast<size_t>(ya * m_.N + c)] -= fy;
            }
          }
        }
      }
    }
  }

  void add_hess_diag(const LinPoint& lp, std::vector<double>* diag,
                     bool picard) const {
    if (m_.n == 1) {
      for (int k = 0; k <= m_.ncx; ++k) {
        const size_t t = static_cast<size_t>(k);
        const double len = m_.sx[t];
        const double cc = lp.c[t], s = lp.s[t];
        const double fac =
            (!picard && s > 0.0) ? (lp.dd[t] - cc) / (s * s) : 0.0;
        for (int side = 0; side < 2; ++side) {
          const int node = k + side;
          if (!m_.interior[static_cast<size_t>(node)]) continue;
          for (int c = 0; c < m_.N; ++c) {
            const double g = lp.gx[t * m_.N + c];
            (*diag)[dof(node, 0, c)] +=
                cc / len + fac * g * g / len;
          }
        }
      }
      return;
    }
    size_t t = 0;
    for (int rx = 0; rx <= m_.ncx; ++rx) {
      const double ax = m_.sx[static_cast<size_t>(rx)];
      for (int ry = 0; ry <= m_.ncy; ++ry) {
        const double ay = m_.sy[static_cast<size_t>(ry)];
        const double wgt = 0.25 * ax * ay;
        const int corners[4] = {m_.nidx(rx, ry), m_.nidx(rx + 1, ry),
                                m_.nidx(rx, ry + 1), m_.nidx(rx + 1, ry + 1)};
        for (int xe = 0; xe < 2; ++xe) {
          const int xa = xe ? corners[2] : corners[0];
          const int xb = xe ? corners[3] : corners[1];
          for (int ye = 0; ye < 2; ++ye, ++t) {
            const int ya = ye ? corners[1] : corners[0];
            const int yb = ye ? corners[3] : corners[2];
            const double cc = lp.c[t], s = lp.s[t];
            const double fac =
                (!picard && s > 0.0) ? (lp.dd[t] - cc) / (s * s) : 0.0;
            for (int q = 0; q < 4; ++q) {
              const int node = corners[q];
              if (!m_.interior[static_cast<size_t>(node)]) continue;
              const double dgx =
                  node == xb ? 1.0 / ax : (node == xa ? -1.0 / ax : 0.0);
              const double dgy =
                  node == yb ? 1.0 / ay : (node == ya ? -1.0 / ay : 0.0);
              if (dgx == 0.0 && dgy == 0.0) continue;
              for (int c = 0; c < m_.N; ++c) {
                const double proj = lp.gx[t * m_.N + c] * dgx +
                                    lp.gy[t * m_.N + c] * dgy;
                (*diag)[static_cast<size_t>(node * m_.N + c)] +=
                    wgt * (cc * (dgx * dgx + dgy * dgy) + fac * proj * proj);
              }
            }
          }
        }
      }
    }
  }

 private:
  size_t dof(int ix, int iy, int c) const {
    return static_cast<size_t>(m_.nidx(ix, iy) * m_.N + c);
  }

  Mesh m_;
  OrliczPtr phi_;
};

double dof_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// The step problem in scaled form: F(u) = mw*M(u - base) + dE(u) - M f = 0
// with M the lumped cell mass h^n.  mass and rhs fold mw and the data in:
// F(u) = mass.*u - rhs + dE(u) on interior dofs.
struct NewtonSetup {
  const Scheme& sch;
  std::vector<char> intdof;
  std::vector<double> mass;
  std::vector<double> rhs;
  double scale = 0.0;
};

NewtonSetup make_setup(const Scheme& sch, const GridSpec& g, double mw,
                       const std::vector<double>& base, double t_forcing) {
  const Mesh& m = sch.mesh();
  const size_t nd = static_cast<size_t>(m.nodes) * m.N;
  NewtonSetup ns{sch, {}, {}, {}, 0.0};
  ns.intdof.assign(nd, 0);
  ns.mass.assign(nd, 0.0);
  ns.rhs.assign(nd, 0.0);
  const double hn = std::pow(m.h, m.n);
  for (int node = 0; node < m.nodes; ++node) {
    if (!m.interior[static_cast<size_t>(node)]) continue;
    for (int c = 0; c < m.N; ++c) {
      const size_t d = static_cast<size_t>(node * m.N + c);
      ns.intdof[d] = 1;
      ns.mass[d] = mw * hn;
      ns.rhs[d] = ns.mass[d] * base[d];
    }
  }
  if (g.forcing) {
    const int ncy = g.n == 2 ? g.cells[1] : 1;
    double x[2] = {0.0, 0.0};
    for (int cx = 0; cx < g.cells[0]; ++cx) {
      for (int cy = 0; cy < ncy; ++cy) {
        cell_center(g, cx, cy, x);
        const int node = m.nidx(cx + 1, g.n == 2 ? cy + 1 : 0);
        for (int c = 0; c < m.N; ++c)
          ns.rhs[static_cast<size_t>(node * m.N + c)] +=
              hn * g.forcing(t_forcing, x, c);
      }
    }
  }
  ns.scale = dof_norm(ns.rhs);
  return ns;
}

void residual(const NewtonSetup& ns, const std::vector<double>& u,
              std::vector<double>* r) {
  r->assign(u.size(), 0.0);
  ns.sch.add_grad(u, r);
  for (size_t i = 0; i < u.size(); ++i)
    if (ns.intdof[i]) (*r)[i] += ns.mass[i] * u[i] - ns.rhs[i];
}

// Jacobi-preconditioned CG on J = diag(mass) + E''(lp), matrix-free.
// Solves J x = b to a relative residual; x starts at zero and stays zero on
// boundary dofs.  Returns the iteration count.
long pcg(const NewtonSetup& ns, const LinPoint& lp, bool picard,
         const std::vector<double>& b, std::vector<double>* x,
         const SolveOptions& opt) {
  const size_t nd = b.size();
  x->assign(nd, 0.0);
  const double bb = dof_norm(b);
  if (!(bb > 0.0)) return 0;

  std::vector<double> diag(ns.mass);
  ns.sch.add_hess_diag(lp, &diag, picard);
  for (size_t i = 0; i < nd; ++i)
    if (!ns.intdof[i] || diag[i] <= 0.0) diag[i] = 1.0;

  std::vector<double> r(b), z(nd), p(nd), Ap(nd);
  for (size_t i = 0; i < nd; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = 0.0;
  for (size_t i = 0; i < nd; ++i) rz += r[i] * z[i];
  double rr = 0.0;
  for (size_t i = 0; i < nd; ++i) rr += r[i] * r[i];
  const double tol2 = opt.cg_rtol * opt.cg_rtol * bb * bb;

  long it = 0;
  while (it < opt.cg_max && rr > tol2) {
    Ap.assign(nd, 0.0);
    ns.sch.hess_mul(lp, p, &Ap, picard);
    for (size_t i = 0; i < nd; ++i)
      if (ns.intdof[i]) Ap[i] += ns.mass[i] * p[i];
    double pAp = 0.0;
    for (size_t i = 0; i < nd; ++i) pAp += p[i] * Ap[i];
    if (!(pAp > 0.0) || !std::isfinite(pAp)) break;
    const double alpha = rz / pAp;
    rr = 0.0;
    for (size_t i = 0; i < nd; ++i) {
      (*x)[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      rr += r[i] * r[i];
    }
    double rz_new = 0.0;
    for (size_t i = 0; i < nd; ++i) {
      z[i] = r[i] / diag[i];
      rz_new += r[i] * z[i];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (size_t i = 0; i < nd; ++i) p[i] = z[i] + beta * p[i];
    ++it;
  }
  return it;
}

// Damped Newton with a residual-norm line search; after a failed search the
// next opt.picard_sweeps linear solves freeze the diffusion coefficients and
// take full steps, then Newton resumes.  Returns true when the residual
// tolerance was met.
bool newton_solve(const NewtonSetup& ns, const SolveOptions& opt,
                  bool throw_on_stall, std::vector<double>* u,
                  StepReport* rep) {
  const size_t nd = u->size();
  std::vector<double> r(nd), b(nd), delta(nd), utry(nd), rtry(nd);

  residual(ns, *u, &r);
  double rn = dof_norm(r);
  if (!std::isfinite(rn))
    throw NumericalBlowup("nonlinear residual not finite at initial guess");
  const double tol =
      std::max(opt.newton_rtol * std::max(ns.scale, rn), 1e-300);
  if (rep) rep->residual_history.push_back(rn);

  int iters = 0;
  int picard_budget = 0;
  while (rn > tol) {
    if (iters >= opt.newton_max) {
      if (throw_on_stall)
        throw NonConvergence("newton stalled at residual " + fmt_g(rn) +
                             " (tolerance " + fmt_g(tol) + ")");
      break;
    }
    const LinPoint lp = ns.sch.linearize(*u);
    const bool pic = picard_budget > 0;
    for (size_t i = 0; i < nd; ++i) b[i] = -r[i];
    const long cg_its = pcg(ns, lp, pic, b, &delta, opt);
    if (rep) rep->cg_iters += cg_its;

    bool advanced = false;
    if (pic) {
      for (size_t i = 0; i < nd; ++i)
        if (ns.intdof[i]) (*u)[i] += delta[i];
      --picard_budget;
      residual(ns, *u, &r);
      rn = dof_norm(r);
      if (!std::isfinite(rn))
        throw NumericalBlowup("residual not finite during frozen-coefficient "
                              "correction");
      advanced = true;
    } else {
      double step = 1.0;
      for (int hc = 0; hc <= opt.max_halvings; ++hc, step *= 0.5) {
        for (size_t i = 0; i < nd; ++i) utry[i] = (*u)[i] + step * delta[i];
        residual(ns, utry, &rtry);
        const double rtn = dof_norm(rtry);
        if (std::isfinite(rtn) && rtn <= rn * (1.0 - 1e-4 * step)) {
          u->swap(utry);
          r.swap(rtry);
          rn = rtn;
          advanced = true;
          break;
        }
      }
      if (!advanced) {
        picard_budget = opt.picard_sweeps;
        if (rep) rep->used_picard = true;
      }
    }
    ++iters;
    if (rep) {
      rep->newton_iters = iters;
      rep->residual_history.push_back(rn);
    }
  }
  if (rep) {
    rep->newton_iters = iters;
    rep->final_residual = rn;
  }
  return rn <= tol;
}

Snapshot step_with_guess(const OrliczPtr& phi, const GridSpec& grid,
                         const Snapshot& prev, double eps_reg,
                         const std::vector<double>& guess,
                         const SolveOptions& opt, StepReport* rep) {
  if (!phi) throw OutOfDomain("step: null phi");
  if (!(eps_reg >= 0.0))
    throw OutOfDomain("step: eps_reg must be nonnegative, got " +
                      fmt_g(eps_reg));
  const size_t nd =
      static_cast<size_t>(node_count(grid)) * static_cast<size_t>(grid.N);
  if (prev.u.size() != nd || guess.size() != nd)
    throw OutOfDomain("step: state vector has wrong size");
  for (double x : prev.u)
    if (!std::isfinite(x))
      throw NumericalBlowup("step: previous state contains NaN or Inf");

  const OrliczPtr phie = make_shifted(phi, eps_reg);
  Scheme sch(grid, phie);
  const double t_new = prev.t + grid.dt;

  std::vector<double> u = guess;
  apply_bc(grid, t_new, &u);

  NewtonSetup ns = make_setup(sch, grid, 1.0 / grid.dt, prev.u, t_new);
  newton_solve(ns, opt, /*throw_on_stall=*/true, &u, rep);
  if (rep) rep->eps_used = eps_reg;
  return Snapshot{t_new, std::move(u)};
}

// One time step with the regularization ladder: try the floor directly, and
// if Newton gives up walk eps down from eps.start, warm-starting each rung
// with the previous solution.
Snapshot advance(const OrliczPtr& phi, const GridSpec& grid,
                 const Snapshot& prev, const SolveOptions& opt,
                 SolveStats* stats) {
  auto absorb = [stats](const StepReport& r) {
    stats->newton_iters += r.newton_iters;
    stats->cg_iters += r.cg_iters;
    if (r.used_picard) ++stats->picard_fallbacks;
    stats->max_newton_per_step =
        std::max(stats->max_newton_per_step, r.newton_iters);
  };

  if (opt.eps.direct_first) {
    StepReport rep;
    try {
      Snapshot s = step_with_guess(phi, grid, prev, opt.eps.floor, prev.u,
                                   opt, &rep);
      absorb(rep);
      return s;
    } catch (const NonConvergence&) {
      absorb(rep);
    }
  }

  ++stats->eps_ladders;
  std::vector<double> guess = prev.u;
  double eps = std::max(opt.eps.start, opt.eps.floor);
  while (true) {
    StepReport rep;
    Snapshot s;
    try {
      s = step_with_guess(phi, grid, prev, eps, guess, opt, &rep);
    } catch (const NonConvergence& e) {
      absorb(rep);
      throw NonConvergence("step to t=" + fmt_g(prev.t + grid.dt) +
                           " failed during regularization continuation at "
                           "eps=" + fmt_g(eps) + ": " + e.what());
    }
    absorb(rep);
    if (eps <= opt.eps.floor) return s;
    guess = s.u;
    eps = std::max(eps * 0.5, opt.eps.floor);
  }
}

}  // namespace

Snapshot step_implicit(const OrliczPtr& phi, const GridSpec& grid,
                       const Snapshot& prev, double eps_reg,
                       const SolveOptions& opt, StepReport* rep) {
  validate_grid(grid);
  StepReport local;
  Snapshot s = step_with_guess(phi, grid, prev, eps_reg, prev.u, opt,
                               rep ? rep : &local);
  return s;
}

GradOrField solve_parabolic(const OrliczPtr& phi, const GridSpec& grid,
                            const SolveOptions& opt) {
  if (!phi) throw OutOfDomain("solve_parabolic: null phi");
  validate_grid(grid);
  const double steps_real = grid.T / grid.dt;
  const long steps = std::llround(steps_real);
  if (std::fabs(steps * grid.dt - grid.T) >
      1e-9 * std::max(grid.T, grid.dt))
    throw AssumptionViolation(
        "solve_parabolic: T must be an integer number of dt steps, got T/dt=" +
        fmt_g(steps_real));

  Snapshot cur{0.0, sample_initial(grid)};
  std::vector<Snapshot> snaps;
  snaps.push_back(cur);

  SolveStats stats;
  stats.final_eps = opt.eps.floor;
  stats.energy_trace.push_back(
      scheme_energy(phi, grid, cur.u, opt.eps.floor));

  for (long m = 1; m <= steps; ++m) {
    cur = advance(phi, grid, cur, opt, &stats);
    cur.t = static_cast<double>(m) * grid.dt;  // keep the clock exact
    stats.energy_trace.push_back(
        scheme_energy(phi, grid, cur.u, opt.eps.floor));
    if (m % grid.snapshot_every == 0 || m == steps) snaps.push_back(cur);
  }

  GradOrField out = discrete_fields(phi, grid, std::move(snaps));
  out.stats = std::move(stats);
  return out;
}

GradOrField solve_elliptic(const OrliczPtr& phi, const GridSpec& grid,
                           const SolveOptions& opt) {
  if (!phi) throw OutOfDomain("solve_elliptic: null phi");
  validate_grid(grid);

  std::vector<double> u;
  if (grid.u0) {
    u = sample_initial(grid);
  } else {
    // No volume guess given: start from the mean of the boundary trace.
    const size_t nd =
        static_cast<size_t>(node_count(grid)) * static_cast<size_t>(grid.N);
    u.assign(nd, 0.0);
    apply_bc(grid, 0.0, &u);
    for (int c = 0; c < grid.N; ++c) {
      double sum = 0.0;
      long cnt = 0;
      const int ncy = grid.n == 2 ? grid.cells[1] : 0;
      for (int ix = 0; ix < grid.cells[0] + 2; ++ix) {
        for (int iy = 0; iy < (grid.n == 2 ? ncy + 2 : 1); ++iy) {
          if (node_is_interior(grid, ix, iy)) continue;
          sum += u[static_cast<size_t>(node_index(grid, ix, iy) * grid.N + c)];
          ++cnt;
        }
      }
      const double mean = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
      for (int ix = 0; ix < grid.cells[0] + 2; ++ix) {
        for (int iy = 0; iy < (grid.n == 2 ? ncy + 2 : 1); ++iy) {
          if (!node_is_interior(grid, ix, iy)) continue;
          u[static_cast<size_t>(node_index(grid, ix, iy) * grid.N + c)] = mean;
        }
      }
    }
  }

  const OrliczPtr phie = make_shifted(phi, opt.eps.floor);
  Scheme sch(grid, phie);
  SolveStats stats;
  stats.final_eps = opt.eps.floor;

  // Stationarity defect: dE(u) - M f on the interior dofs.
  NewtonSetup defect = make_setup(sch, grid, 0.0, u, 0.0);
  std::vector<double> rvec;
  residual(defect, u, &rvec);
  const double escale0 = dof_norm(rvec);
  double eres = escale0;
  const double etol = std::max(1e-10 * escale0, 1e-300);

  double tau = opt.pseudo_tau0;
  bool done = eres <= etol;
  std::vector<double> u_prev;
  for (int k = 0; k < opt.pseudo_steps_max && !done; ++k) {
    NewtonSetup ns = make_setup(sch, grid, 1.0 / tau, u, 0.0);
    ns.scale = std::max(ns.scale, escale0);
    u_prev = u;
    StepReport rep;
    const bool inner_ok =
        newton_solve(ns, opt, /*throw_on_stall=*/false, &u, &rep);
    stats.newton_iters += rep.newton_iters;
    stats.cg_iters += rep.cg_iters;
    if (rep.used_picard) ++stats.picard_fallbacks;
    stats.max_newton_per_step =
        std::max(stats.max_newton_per_step, rep.newton_iters);
    stats.energy_trace.push_back(sch.energy(u));

    residual(defect, u, &rvec);
    eres = dof_norm(rvec);
    if (!std::isfinite(eres))
      throw NumericalBlowup("stationary defect not finite");
    double dmove = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
      const double d = u[i] - u_prev[i];
      dmove += d * d;
    }
    // Either the defect dropped ten orders, or a converged pseudo step no
    // longer moves the state: the defect is then at the rounding floor of
    // the assembly and cannot shrink further.
    done = eres <= etol ||
           (inner_ok && std::sqrt(dmove) <= 1e-12 * (1.0 + dof_norm(u)));
    tau = std::min(tau * 10.0, opt.pseudo_tau_cap);
  }
  if (!done)
    throw NonConvergence("pseudo-transient continuation stalled at defect " +
                         fmt_g(eres) + " (target " + fmt_g(etol) + ")");

  std::vector<Snapshot> snaps;
  snaps.push_back(Snapshot{0.0, std::move(u)});
  GradOrField out = discrete_fields(phi, grid, std::move(snaps));
  out.stats = std::move(stats);
  return out;
}

double scheme_energy(const OrliczPtr& phi, const GridSpec& grid,
                     const std::vector<double>& u, double eps_reg) {
  if (!phi) throw OutOfDomain("scheme_energy: null phi");
  const size_t nd =
      static_cast<size_t>(node_count(grid)) * static_cast<size_t>(grid.N);
  if (u.size() != nd)
    throw OutOfDomain("scheme_energy: state vector has wrong size");
  Scheme sch(grid, make_shifted(phi, eps_reg));
  return sch.energy(u);
}

}  // namespace phicaloric
