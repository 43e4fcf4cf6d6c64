#include <phicaloric/presets.hpp>

#include <phicaloric/errors.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace phicaloric {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Deterministic U(-1,1) independent of library distribution internals.
double sym_unit(std::mt19937_64& rng) {
  const double u01 =
      static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
  return 2.0 * u01 - 1.0;
}

}  // namespace

double barenblatt_value(double p, double mass, double t, double x,
                        double xc) {
  if (!(p > 2.0))
    throw OutOfDomain("barenblatt: requires p > 2, got " + std::to_string(p));
  if (!(t > 0.0))
    throw OutOfDomain("barenblatt: requires t > 0");
  // One space dimension: alpha = 1/(2(p-1)), xi = (x-xc)/t^alpha and
  // u = t^{-alpha} (C - k |xi|^{p/(p-1)})_+^{(p-1)/(p-2)},
  // k = ((p-2)/p) alpha^{1/(p-1)}.
  const double alpha = 1.0 / (2.0 * (p - 1.0));
  const double k = (p - 2.0) / p * std::pow(alpha, 1.0 / (p - 1.0));
  const double xi = (x - xc) / std::pow(t, alpha);
  const double core = mass - k * std::pow(std::fabs(xi), p / (p - 1.0));
  if (core <= 0.0) return 0.0;
  return std::pow(t, -alpha) * std::pow(core, (p - 1.0) / (p - 2.0));
}

double radial_pharmonic_value(double p, int n, const double* x,
                              const double* c) {
  if (!(p > 1.0)) throw OutOfDomain("radial profile: requires p > 1");
  if (p == static_cast<double>(n))
    throw OutOfDomain("radial profile: p == n gives the log solution");
  double r2 = 0.0;
  for (int d = 0; d < n; ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
  const double r = std::sqrt(r2);
  if (!(r > 0.0))
    throw OutOfDomain("radial profile: singular point inside evaluation set");
  return std::pow(r, (p - static_cast<double>(n)) / (p - 1.0));
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "zero",       "eigenmode", "affine",           "random_smooth",
      "mms_p3",     "barenblatt", "radial_pharmonic", "harmonic_poly"};
  return names;
}

Preset make_preset(const std::string& name, const PresetParams& prm,
                   const GridSpec& g) {
  const int n = g.n, N = g.N;
  const double A = prm.amplitude;
  const double L0 = g.extent[0];
  const double L1 = g.extent[1];

  Preset ps;
  if (name == "zero") {
    ps.u0 = [](const double*, int) { return 0.0; };
    ps.bc = [](double, const double*, int) { return 0.0; };
    ps.exact = [](double, const double*, int) { return 0.0; };
    return ps;
  }

  if (name == "eigenmode") {
    // Product sine bump, component c scaled by 2^{-c}; the exact field is
    // the heat-flow decay of the same mode (matches the solver for a
    // quadratic phi up to time discretization).
    double lam = 0.0;
    for (int d = 0; d < n; ++d) {
      const double kd = kPi / (d == 0 ? L0 : L1);
      lam += kd * kd;
    }
    auto mode = [n, L0, L1](const double* x) {
      double v = std::sin(kPi * x[0] / L0);
      if (n == 2) v *= std::sin(kPi * x[1] / L1);
      return v;
    };
    ps.u0 = [A, mode](const double* x, int c) {
      return A * std::ldexp(mode(x), -c);
    };
    ps.bc = [](double, const double*, int) { return 0.0; };
    ps.exact = [A, mode, lam](double t, const double* x, int c) {
      return A * std::exp(-lam * t) * std::ldexp(mode(x), -c);
    };
    return ps;
  }

  if (name == "affine") {
    // Exactly steady for every phi: constant gradient, flux divergence zero.
    auto val = [A, n](const double* x, int c) {
      const double slope = 1.0 + 0.25 * static_cast<double>(c);
      double v = slope * (x[0] + (n == 2 ? 0.5 * x[1] : 0.0));
      return A * (v + 0.1 * static_cast<double>(c + 1));
    };
    ps.u0 = val;
    ps.bc = [val](double, const double* x, int c) { return val(x, c); };
    ps.exact = [val](double, const double* x, int c) { return val(x, c); };
    return ps;
  }

  if (name == "random_smooth") {
    // Low-frequency sine series with seeded coefficients, normalized so the
    // sampled sup of |grad u0| equals the amplitude.  Zero trace.
    const int K = 3;
    std::mt19937_64 rng(prm.seed);
    std::vector<double> coef;  // [comp][k][l] flattened
    coef.reserve(static_cast<size_t>(N) * K * (n == 2 ? K : 1));
    for (int c = 0; c < N; ++c) {
      for (int k = 1; k <= K; ++k) {
        if (n == 1) {
          coef.push_back(sym_unit(rng) / static_cast<double>(k * k));
        } else {
          for (int l = 1; l <= K; ++l)
            coef.push_back(sym_unit(rng) / static_cast<double>(k * k + l * l));
        }
      }
    }
    auto value = [coef, n, N, K, L0, L1](const double* x, int c) {
      double v = 0.0;
      size_t idx = static_cast<size_t>(c) * K * (n == 2 ? K : 1);
      for (int k = 1; k <= K; ++k) {
        const double sx = std::sin(k * kPi * x[0] / L0);
        if (n == 1) {
          v += coef[idx++] * sx;
        } else {
          for (int l = 1; l <= K; ++l)
            v += coef[idx++] * sx * std::sin(l * kPi * x[1] / L1);
        }
      }
      return v;
    };
    auto grad_sq = [coef, n, N, K, L0, L1](const double* x) {
      double sq = 0.0;
      for (int c = 0; c < N; ++c) {
        double gx = 0.0, gy = 0.0;
        size_t idx = static_cast<size_t>(c) * K * (n == 2 ? K : 1);
        for (int k = 1; k <= K; ++k) {
          const double kk = k * kPi / L0;
          const double sx = std::sin(k * kPi * x[0] / L0);
          const double cx = std::cos(k * kPi * x[0] / L0);
          if (n == 1) {
            gx += coef[idx++] * kk * cx;
          } else {
            for (int l = 1; l <= K; ++l) {
              const double ll = l * kPi / L1;
              const double sy = std::sin(l * kPi * x[1] / L1);
              const double cy = std::cos(l * kPi * x[1] / L1);
              gx += coef[idx] * kk * cx * sy;
              gy += coef[idx] * ll * sx * cy;
              ++idx;
            }
          }
        }
        sq += gx * gx + gy * gy;
      }
      return sq;
    };
    double sup2 = 0.0;
    const int M = 64;
    double x[2] = {0.0, 0.0};
    for (int i = 0; i <= M; ++i) {
      x[0] = L0 * static_cast<double>(i) / M;
      if (n == 1) {
        sup2 = std::max(sup2, grad_sq(x));
      } else {
        for (int j = 0; j <= M; ++j) {
          x[1] = L1 * static_cast<double>(j) / M;
          sup2 = std::max(sup2, grad_sq(x));
        }
      }
    }
    const double scale = sup2 > 0.0 ? A / std::sqrt(sup2) : 0.0;
    ps.u0 = [value, scale](const double* x, int c) {
      return scale * value(x, c);
    };
    ps.bc = [](double, const double*, int) { return 0.0; };
    return ps;
  }

  if (name == "mms_p3") {
    // Manufactured solution for the scalar 1-D flux |u_x| u_x (phi = t^3/3):
    // u = A e^{-t} sin(kx), f = u_t - (|u_x| u_x)_x.
    if (n != 1 || N != 1)
      throw OutOfDomain("mms_p3: defined for n=1, N=1");
    const double k = kPi / L0;
    ps.exact = [A, k](double t, const double* x, int) {
      return A * std::exp(-t) * std::sin(k * x[0]);
    };
    ps.u0 = [A, k](const double* x, int) { return A * std::sin(k * x[0]); };
    ps.bc = [](double, const double*, int) { return 0.0; };
    ps.forcing = [A, k](double t, const double* x, int) {
      const double s = std::sin(k * x[0]);
      const double co = std::cos(k * x[0]);
      const double ut = -A * std::exp(-t) * s;
      const double div_flux =
          -2.0 * A * A * k * k * k * std::exp(-2.0 * t) * std::fabs(co) * s;
      return ut - div_flux;
    };
    return ps;
  }

  if (name == "barenblatt") {
    if (n != 1 || N != 1)
      throw OutOfDomain("barenblatt: defined for n=1, N=1");
    const double p = prm.p, mass = prm.mass, t0 = prm.t_offset;
    const double xc = 0.5 * L0;
    ps.exact = [p, mass, t0, xc](double t, const double* x, int) {
      return barenblatt_value(p, mass, t0 + t, x[0], xc);
    };
    ps.u0 = [p, mass, t0, xc](const double* x, int) {
      return barenblatt_value(p, mass, t0, x[0], xc);
    };
    ps.bc = [p, mass, t0, xc](double t, const double* x, int) {
      return barenblatt_value(p, mass, t0 + t, x[0], xc);
    };
    return ps;
  }

  if (name == "radial_pharmonic") {
    if (N != 1) throw OutOfDomain("radial_pharmonic: defined for N=1");
    const double p = prm.p;
    const double c0 = prm.center[0], c1 = prm.center[1];
    auto val = [A, p, n, c0, c1](const double* x, int) {
      const double c[2] = {c0, c1};
      return A * radial_pharmonic_value(p, n, x, c);
    };
    ps.u0 = val;
    ps.bc = [val](double, const double* x, int c) { return val(x, c); };
    ps.exact = [val](double, const double* x, int c) { return val(x, c); };
    return ps;
  }

  if (name == "harmonic_poly") {
    // x^2 - y^2: harmonic, so exactly steady for quadratic phi.
    if (n != 2 || N != 1)
      throw OutOfDomain("harmonic_poly: defined for n=2, N=1");
    auto val = [A](const double* x, int) {
      return A * (x[0] * x[0] - x[1] * x[1]);
    };
    ps.u0 = val;
    ps.bc = [val](double, const double* x, int c) { return val(x, c); };
    ps.exact = [val](double, const double* x, int c) { return val(x, c); };
    return ps;
  }

  throw OutOfDomain("unknown preset '" + name + "'");
}

}  // namespace phicaloric
