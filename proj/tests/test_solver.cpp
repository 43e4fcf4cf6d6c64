#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <phicaloric/errors.hpp>
#include <phicaloric/fields.hpp>
#include <phicaloric/grid.hpp>
#include <phicaloric/orlicz.hpp>
#include <phicaloric/presets.hpp>
#include <phicaloric/solver.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

using namespace phicaloric;

namespace {

constexpr double kPi = 3.14159265358979323846;

GridSpec shaped(int n, int N, int cells, double extent, double dt, double T) {
  GridSpec g;
  g.n = n;
  g.N = N;
  g.cells[0] = cells;
  g.cells[1] = cells;
  g.extent[0] = extent;
  g.extent[1] = extent;
  g.dt = dt;
  g.T = T;
  return g;
}

void attach(GridSpec* g, const Preset& ps) {
  g->u0 = ps.u0;
  g->bc = ps.bc;
  g->forcing = ps.forcing;
}

double discrete_rate(const GridSpec& g) {
  const double h = grid_h(g);
  return (2.0 - 2.0 * std::cos(kPi * h)) / (h * h);
}

// Max |u - exact(t,.)| over interior nodes.
double sup_error(const GridSpec& g, const Snapshot& snap,
                 const std::function<double(double, const double*, int)>& ex) {
  const auto cx = axis_node_coords(g, 0);
  const auto cy =
      g.n == 2 ? axis_node_coords(g, 1) : std::vector<double>{0.0};
  double worst = 0.0;
  for (int ix = 0; ix < axis_nodes(g, 0); ++ix) {
    const int ny = g.n == 2 ? axis_nodes(g, 1) : 1;
    for (int iy = 0; iy < ny; ++iy) {
      const double x[2] = {cx[static_cast<size_t>(ix)],
                           g.n == 2 ? cy[static_cast<size_t>(iy)] : 0.0};
      for (int c = 0; c < g.N; ++c) {
        const double got =
            snap.u[static_cast<size_t>(node_index(g, ix, iy) * g.N + c)];
        worst = std::max(worst, std::fabs(got - ex(snap.t, x, c)));
      }
    }
  }
  return worst;
}

double l1_error(const GridSpec& g, const Snapshot& snap,
                const std::function<double(double, const double*, int)>& ex) {
  const auto cx = axis_node_coords(g, 0);
  const double h = grid_h(g);
  double acc = 0.0;
  for (int ix = 1; ix <= g.cells[0]; ++ix) {
    const double x[2] = {cx[static_cast<size_t>(ix)], 0.0};
    acc += h * std::fabs(snap.u[static_cast<size_t>(node_index(g, ix, 0))] -
                         ex(snap.t, x, 0));
  }
  return acc;
}

double interior_mass(const GridSpec& g, const Snapshot& snap) {
  const double h = grid_h(g);
  double acc = 0.0;
  for (int ix = 1; ix <= g.cells[0]; ++ix)
    acc += h * snap.u[static_cast<size_t>(node_index(g, ix, 0))];
  return acc;
}

}  // namespace

TEST_CASE("zero data stays exactly zero") {
  const auto phi = make_power(3.0);
  GridSpec g = shaped(1, 1, 16, 1.0, 1e-3, 5e-3);
  attach(&g, make_preset("zero", {}, g));
  const GradOrField out = solve_parabolic(phi, g);
  REQUIRE(out.snaps.size() == 6);
  for (const auto& s : out.snaps)
    for (double v : s.u) CHECK(v == 0.0);
  CHECK(out.stats.newton_iters == 0);
  for (double e : out.stats.energy_trace) CHECK(e == 0.0);
}

TEST_CASE("affine data is a steady state for every nonlinearity") {
  for (double p : {1.5, 2.0, 3.0}) {
    const auto phi = make_power(p);
    for (int n : {1, 2}) {
      GridSpec g = shaped(n, 2, n == 1 ? 32 : 12, 1.0, 1e-3, 3e-3);
      attach(&g, make_preset("affine", {}, g));
      const GradOrField out = solve_parabolic(phi, g);
      const auto& first = out.snaps.front().u;
      const auto& last = out.snaps.back().u;
      double worst = 0.0, scale = 0.0;
      for (size_t i = 0; i < first.size(); ++i) {
        worst = std::max(worst, std::fabs(last[i] - first[i]));
        scale = std::max(scale, std::fabs(first[i]));
      }
      INFO("p=", p, " n=", n);
      CHECK(worst <= 1e-12 * scale);
      // The time step sees a vanishing residual right away.
      CHECK(out.stats.max_newton_per_step == 0);
    }
  }
}

TEST_CASE("heat decay of the half-offset eigenmode, 1-D") {
  const auto phi = make_power(2.0);
  GridSpec g = shaped(1, 1, 128, 1.0, 1e-4, 0.1);
  attach(&g, make_preset("eigenmode", {}, g));
  const double lam = discrete_rate(g);

  SUBCASE("single implicit step matches the exact resolvent factor") {
    SolveOptions opt;
    opt.newton_rtol = 1e-12;
    opt.cg_rtol = 1e-12;
    Snapshot prev{0.0, sample_initial(g)};
    StepReport rep;
    const Snapshot next = step_implicit(phi, g, prev, 0.0, opt, &rep);
    const double factor = 1.0 / (1.0 + g.dt * lam);
    for (int ix = 1; ix <= g.cells[0]; ++ix) {
      const size_t at = static_cast<size_t>(node_index(g, ix, 0));
      CHECK(next.u[at] == doctest::Approx(prev.u[at] * factor)
                              .epsilon(5e-12));
      // The semigroup factor agrees to first order in dt.
      CHECK(std::fabs(next.u[at] - prev.u[at] * std::exp(-lam * g.dt)) <=
            1e-6 * std::fabs(prev.u[at]) + 1e-18);
    }
    CHECK(next.u.front() == 0.0);
    CHECK(next.u.back() == 0.0);
    CHECK(rep.newton_iters <= 2);
  }

  SUBCASE("full march tracks the resolvent power") {
    SolveOptions opt;
    opt.newton_rtol = 1e-12;
    opt.cg_rtol = 1e-11;
    g.snapshot_every = 200;
    const GradOrField out = solve_parabolic(phi, g, opt);
    const auto coords = axis_node_coords(g, 0);
    for (const auto& s : out.snaps) {
      const long m = std::lround(s.t / g.dt);
      const double amp = std::pow(1.0 + g.dt * lam, -static_cast<double>(m));
      double worst = 0.0;
      for (int ix = 0; ix < axis_nodes(g, 0); ++ix) {
        const double want =
            amp * std::sin(kPi * coords[static_cast<size_t>(ix)]);
        worst = std::max(
            worst,
            std::fabs(s.u[static_cast<size_t>(node_index(g, ix, 0))] - want));
      }
      INFO("t=", s.t);
      CHECK(worst < 1e-7);
    }
    CHECK(out.stats.max_newton_per_step <= 2);
    CHECK(out.stats.eps_ladders == 0);
  }
}

TEST_CASE("vector heat flow decouples componentwise") {
  const auto phi = make_power(2.0);
  GridSpec g = shaped(1, 2, 32, 1.0, 1e-3, 0.02);
  attach(&g, make_preset("eigenmode", {}, g));
  const double lam = discrete_rate(g);
  const GradOrField out = solve_parabolic(phi, g);
  const Snapshot& s = out.snaps.back();
  const long m = std::lround(s.t / g.dt);
  const double amp = std::pow(1.0 + g.dt * lam, -static_cast<double>(m));
  const auto coords = axis_node_coords(g, 0);
  for (int ix = 0; ix < axis_nodes(g, 0); ++ix) {
    const double mode = std::sin(kPi * coords[static_cast<size_t>(ix)]);
    const size_t base = static_cast<size_t>(node_index(g, ix, 0)) * 2;
    CHECK(std::fabs(s.u[base] - amp * mode) < 1e-9);
    CHECK(std::fabs(s.u[base + 1] - 0.5 * amp * mode) < 1e-9);
  }
}

TEST_CASE("implicit steps dissipate the scheme energy") {
  PresetParams prm;
  prm.seed = 3;
  for (double p : {1.8, 3.0}) {
    const auto phi = make_power(p);
    GridSpec g = shaped(2, 1, 16, 1.0, 1e-3, 0.02);
    attach(&g, make_preset("random_smooth", prm, g));
    const GradOrField out = solve_parabolic(phi, g);
    const auto& tr = out.stats.energy_trace;
    REQUIRE(tr.size() == 21);
    const double slack = 1e-9 * tr.front();
    for (size_t i = 1; i < tr.size(); ++i) {
      INFO("p=", p, " step=", i);
      CHECK(tr[i] <= tr[i - 1] + slack);
    }

    // Comparison bound: values stay inside the initial range.
    double lo = 0.0, hi = 0.0;  // trace is zero
    for (double v : out.snaps.front().u) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double pad = 1e-9 * (hi - lo);
    for (const auto& s : out.snaps)
      for (double v : s.u) {
        CHECK(v >= lo - pad);
        CHECK(v <= hi + pad);
      }
  }
}

TEST_CASE("manufactured p=3 solution converges at second order") {
  const auto phi = make_power(3.0);
  const double T = 0.02;
  std::vector<double> errs;
  for (int cells : {32, 64, 128}) {
    GridSpec g = shaped(1, 1, cells, 1.0, 1.0, T);
    const double h = grid_h(g);
    const long steps =
        static_cast<long>(std::ceil(T / (0.2 * h * h) - 1e-12));
    g.dt = T / static_cast<double>(steps);
    Preset ps = make_preset("mms_p3", {}, g);
    attach(&g, ps);
    g.snapshot_every = static_cast<int>(steps);
    const GradOrField out = solve_parabolic(phi, g);
    errs.push_back(sup_error(g, out.snaps.back(), ps.exact));
  }
  INFO("errors ", errs[0], " ", errs[1], " ", errs[2]);
  CHECK(std::log2(errs[0] / errs[1]) >= 1.8);
  CHECK(std::log2(errs[1] / errs[2]) >= 1.8);
}

TEST_CASE("source-type profile: analytic properties pin the oracle") {
  const double p = 3.0, C = 0.25, xc = 2.0;

  SUBCASE("self-similar rescaling collapses onto the t=1 profile") {
    const double alpha = 1.0 / (2.0 * (p - 1.0));
    for (double t : {1.0, 1.37, 2.0}) {
      for (double x : {1.1, 1.8, 2.0, 2.4, 3.1}) {
        const double xi = (x - xc) / std::pow(t, alpha);
        const double ref =
            std::pow(t, -alpha) * barenblatt_value(p, C, 1.0, xc + xi, xc);
        CHECK(barenblatt_value(p, C, t, x, xc) ==
              doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }

  SUBCASE("total mass is conserved in time") {
    auto mass_at = [&](double t) {
      const int M = 40000;
      double acc = 0.0;
      for (int i = 0; i <= M; ++i) {
        const double x = 4.0 * i / M;
        const double w = (i == 0 || i == M) ? 0.5 : 1.0;
        acc += w * barenblatt_value(p, C, t, x, xc);
      }
      return acc * 4.0 / M;
    };
    const double m1 = mass_at(1.0);
    CHECK(mass_at(1.5) == doctest::Approx(m1).epsilon(1e-6));
    CHECK(mass_at(2.0) == doctest::Approx(m1).epsilon(1e-6));
  }

  SUBCASE("closed form satisfies the flow equation pointwise") {
    // u_t = (|u_x| u_x)_x away from the interface, checked with small
    // central differences of the closed form itself.
    const double dx = 2e-5, dtau = 2e-5;
    for (double t : {1.0, 1.6}) {
      for (double x : {1.8, 2.1, 2.3}) {
        auto u = [&](double tt, double xx) {
          return barenblatt_value(p, C, tt, xx, xc);
        };
        const double ut = (u(t + dtau, x) - u(t - dtau, x)) / (2.0 * dtau);
        auto flux = [&](double xx) {
          const double g = (u(t, xx + dx) - u(t, xx - dx)) / (2.0 * dx);
          return std::fabs(g) * g;
        };
        const double div = (flux(x + dx) - flux(x - dx)) / (2.0 * dx);
        CHECK(ut == doctest::Approx(div).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("degenerate diffusion front: first-order L1 convergence and mass") {
  const auto phi = make_power(3.0);
  PresetParams prm;
  prm.p = 3.0;
  prm.mass = 0.25;
  prm.t_offset = 1.0;
  std::vector<double> errs;
  for (int cells : {64, 128}) {
    GridSpec g = shaped(1, 1, cells, 4.0, 5e-4, 1.0);
    Preset ps = make_preset("barenblatt", prm, g);
    attach(&g, ps);
    g.snapshot_every = 2000;
    const GradOrField out = solve_parabolic(phi, g);
    const Snapshot& fin = out.snaps.back();
    CHECK(fin.t == doctest::Approx(1.0));
    errs.push_back(l1_error(g, fin, ps.exact));

    const double m0 = interior_mass(g, out.snaps.front());
    const double mT = interior_mass(g, fin);
    CHECK(std::fabs(mT - m0) <= 1e-8 * m0);
  }
  INFO("L1 errors ", errs[0], " ", errs[1]);
  CHECK(errs[0] / errs[1] >= 1.8);
}

TEST_CASE("radial profile: quadrature of the flux ODE matches the power law") {
  // r^{n-1} |u'|^{p-2} u' constant forces u' = u'(r0) (r/r0)^{-(n-1)/(p-1)};
  // integrating from r0 must reproduce the closed form.
  const double p = 3.0;
  const int n = 2;
  const double beta = (p - n) / (p - 1.0);
  const double r0 = 0.5, r1 = 1.7;
  const double du0 = beta * std::pow(r0, beta - 1.0);
  const int M = 20000;
  double val = std::pow(r0, beta);
  const double hh = (r1 - r0) / M;
  for (int i = 0; i < M; ++i) {
    const double ra = r0 + i * hh, rm = ra + 0.5 * hh, rb = ra + hh;
    auto du = [&](double r) {
      return du0 * std::pow(r / r0, -(n - 1.0) / (p - 1.0));
    };
    val += hh / 6.0 * (du(ra) + 4.0 * du(rm) + du(rb));
  }
  CHECK(val == doctest::Approx(std::pow(r1, beta)).epsilon(1e-9));
}

TEST_CASE("stationary solve reproduces the radial profile under refinement") {
  const auto phi = make_power(3.0);
  PresetParams prm;
  prm.p = 3.0;
  std::vector<double> errs;
  for (int cells : {12, 16, 24}) {
    GridSpec g = shaped(2, 1, cells, 1.0, 1.0, 0.0);
    Preset ps = make_preset("radial_pharmonic", prm, g);
    attach(&g, ps);
    const GradOrField out = solve_elliptic(phi, g);
    errs.push_back(sup_error(g, out.snaps.back(), ps.exact));
  }
  INFO("errors ", errs[0], " ", errs[1], " ", errs[2]);
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
}

TEST_CASE("saddle polynomial is recovered exactly by the 5-point limit") {
  const auto phi = make_power(2.0);
  GridSpec g = shaped(2, 1, 24, 1.0, 1.0, 0.0);
  Preset ps = make_preset("harmonic_poly", {}, g);
  g.bc = ps.bc;  // no volume guess: start from the boundary mean
  const GradOrField out = solve_elliptic(phi, g);
  CHECK(sup_error(g, out.snaps.back(), ps.exact) <= 1e-8);
  const auto& tr = out.stats.energy_trace;
  for (size_t i = 1; i < tr.size(); ++i)
    CHECK(tr[i] <= tr[i - 1] + 1e-9 * tr.front());
}

TEST_CASE("regularization floor changes the solution by little") {
  const auto phi = make_power(1.8);
  PresetParams prm;
  prm.seed = 11;
  GridSpec g = shaped(1, 1, 32, 1.0, 1e-3, 0.01);
  attach(&g, make_preset("random_smooth", prm, g));

  SolveOptions coarse;
  coarse.eps.floor = 1e-6;
  const GradOrField a = solve_parabolic(phi, g);
  const GradOrField b = solve_parabolic(phi, g, coarse);
  double worst = 0.0, scale = 0.0;
  const auto& ua = a.snaps.back().u;
  const auto& ub = b.snaps.back().u;
  for (size_t i = 0; i < ua.size(); ++i) {
    worst = std::max(worst, std::fabs(ua[i] - ub[i]));
    scale = std::max(scale, std::fabs(ua[i]));
  }
  CHECK(worst <= 0.01 * scale);
  CHECK(a.stats.final_eps == 1e-8);
  CHECK(b.stats.final_eps == 1e-6);
}

TEST_CASE("solver guards: bad clocks, null data, poisoned states") {
  const auto phi = make_power(2.0);
  GridSpec g = shaped(1, 1, 16, 1.0, 1e-3, 0.1);
  attach(&g, make_preset("eigenmode", {}, g));

  GridSpec ragged = g;
  ragged.T = 0.1 + 0.4e-3;  // not a whole number of steps
  CHECK_THROWS_AS(solve_parabolic(phi, ragged), AssumptionViolation);

  CHECK_THROWS_AS(solve_parabolic(nullptr, g), OutOfDomain);

  Snapshot prev{0.0, sample_initial(g)};
  prev.u[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step_implicit(phi, g, prev, 1e-8), NumericalBlowup);

  Snapshot ok{0.0, sample_initial(g)};
  CHECK_THROWS_AS(step_implicit(phi, g, ok, -1.0), OutOfDomain);

  // Exhausted iteration budget surfaces as NonConvergence.
  const auto phi3 = make_power(3.0);
  SolveOptions tiny;
  tiny.newton_max = 0;
  CHECK_THROWS_AS(step_implicit(phi3, g, ok, 1e-8, tiny), NonConvergence);
}

TEST_CASE("step reports expose the iteration history") {
  const auto phi = make_power(3.0);
  GridSpec g = shaped(1, 1, 32, 1.0, 1e-3, 0.1);
  attach(&g, make_preset("eigenmode", {}, g));
  Snapshot prev{0.0, sample_initial(g)};
  StepReport rep;
  const Snapshot next = step_implicit(phi, g, prev, 1e-8, {}, &rep);
  CHECK(next.t == doctest::Approx(1e-3));
  CHECK(rep.eps_used == 1e-8);
  CHECK(rep.newton_iters >= 1);
  REQUIRE(rep.residual_history.size() >=
          static_cast<size_t>(rep.newton_iters));
  CHECK(rep.residual_history.back() <= rep.residual_history.front());
  CHECK(rep.final_residual == rep.residual_history.back());
}
