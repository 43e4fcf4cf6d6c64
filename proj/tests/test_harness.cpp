#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <phicaloric/cylinder.hpp>
#include <phicaloric/errors.hpp>
#include <phicaloric/fields.hpp>
#include <phicaloric/grid.hpp>
#include <phicaloric/harness.hpp>
#include <phicaloric/orlicz.hpp>
#include <phicaloric/presets.hpp>
#include <phicaloric/solver.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
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

// Builds a field directly from an analytic function sampled on the node
// lattice, bypassing the solver.
GradOrField fabricate(const OrliczPtr& phi, const GridSpec& g,
                      const std::function<double(double, double, double, int)>& fn,
                      const std::vector<double>& times) {
  std::vector<Snapshot> snaps;
  const auto cx = axis_node_coords(g, 0);
  const auto cy = g.n == 2 ? axis_node_coords(g, 1) : std::vector<double>{0.0};
  for (double t : times) {
    Snapshot s;
    s.t = t;
    s.u.assign(static_cast<size_t>(node_count(g)) * g.N, 0.0);
    for (int ix = 0; ix < axis_nodes(g, 0); ++ix) {
      const int ny = g.n == 2 ? axis_nodes(g, 1) : 1;
      for (int iy = 0; iy < ny; ++iy) {
        for (int c = 0; c < g.N; ++c) {
          s.u[static_cast<size_t>(node_index(g, ix, iy)) * g.N + c] =
              fn(t, cx[static_cast<size_t>(ix)],
                 g.n == 2 ? cy[static_cast<size_t>(iy)] : 0.0, c);
        }
      }
    }
    snaps.push_back(std::move(s));
  }
  return discrete_fields(phi, g, std::move(snaps));
}

std::vector<double> ramp_times(double t1, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(t1 * i / (count - 1));
  return out;
}

// v is constant = |(a,b)| on these fields, every derived average is exact.
GradOrField affine_field(const OrliczPtr& phi, int n, double a, double b) {
  GridSpec g = shaped(n, 1, n == 1 ? 64 : 20, 1.0, 1e-3, 0.05);
  return fabricate(
      phi, g,
      [=](double, double x, double y, int) { return a * x + b * y; },
      ramp_times(0.05, 5));
}

ParabolicCylinder centered_cyl(double t0, double R, double alpha) {
  ParabolicCylinder cyl;
  cyl.t0 = t0;
  cyl.x0[0] = 0.5;
  cyl.x0[1] = 0.5;
  cyl.R = R;
  cyl.alpha = alpha;
  return cyl;
}

// One cached diffusion run shared by the slower checks: unit-amplitude
// separable mode, quadratic growth, 24^2 cells.
const GradOrField& heat_run() {
  static const GradOrField out = [] {
    const auto phi = make_power(2.0);
    GridSpec g = shaped(2, 1, 24, 1.0, 1e-3, 0.05);
    attach(&g, make_preset("eigenmode", {}, g));
    return solve_parabolic(phi, g);
  }();
  return out;
}

ParabolicCylinder heat_cyl() { return centered_cyl(0.05, 0.12, 0.8); }

double quantile_v(const GradOrField& f, double q) {
  std::vector<double> all;
  for (const auto& fr : f.frames)
    all.insert(all.end(), fr.v.begin(), fr.v.end());
  std::sort(all.begin(), all.end());
  return all[static_cast<size_t>(q * (all.size() - 1))];
}

// Quantile of v restricted to the inner cylinder, so a level sweep keeps the
// truncated set inside B_R nonempty.
double quantile_v_inner(const GradOrField& f, const ParabolicCylinder& cyl,
                        double q) {
  std::vector<double> all;
  const GridSpec& g = f.grid;
  const int ncy = g.n == 2 ? g.cells[1] : 1;
  for (const auto& fr : f.frames) {
    if (fr.t < cyl.t_start(1.0) || fr.t > cyl.t0) continue;
    for (int cx = 0; cx < g.cells[0]; ++cx) {
      for (int cy = 0; cy < ncy; ++cy) {
        double c[2];
        cell_center(g, cx, cy, c);
        double rr = 0.0;
        for (int d = 0; d < g.n; ++d)
          rr += (c[d] - cyl.x0[d]) * (c[d] - cyl.x0[d]);
        if (rr <= cyl.R * cyl.R)
          all.push_back(fr.v[static_cast<size_t>(cell_index(g, cx, cy))]);
      }
    }
  }
  std::sort(all.begin(), all.end());
  return all[static_cast<size_t>(q * (all.size() - 1))];
}

}  // namespace

TEST_CASE("cutoff family: plateau, support and derivative certificates") {
  const auto phi = make_power(3.0);
  const ParabolicCylinder cyl = centered_cyl(1.0, 0.1, 0.7);
  const CutoffFamily cut(cyl, phi, 8);
  CHECK(cut.c_zeta() == 3.75);
  CHECK(cut.q() >= 2.0);
  CHECK(cut.k_max() == 8);

  for (int k : {0, 1, 2, 5, 8}) {
    const double out_r = cut.lam(k) * cyl.R;
    const double in_r = cut.lam(k + 1) * cyl.R;
    double max_grad = 0.0, max_dt = 0.0;
    bool saw_plateau = false, saw_zero = false;
    for (int i = 0; i <= 220; ++i) {
      const double r = 1.1 * out_r * i / 220.0;
      const double x[2] = {0.5 + r, 0.5};
      for (int j = 0; j <= 200; ++j) {
        const double t =
            cyl.t_start(1.05 * cut.lam(k)) +
            (cyl.t0 - cyl.t_start(1.05 * cut.lam(k))) * j / 200.0;
        const double z = cut.zeta(k, t, x, 2);
        CHECK(z >= 0.0);
        CHECK(z <= 1.0);
        max_grad = std::max(max_grad, cut.grad_norm(k, t, x, 2));
        max_dt = std::max(max_dt, std::fabs(cut.dzeta_dt(k, t, x, 2)));
        if (r <= 0.999 * in_r && t >= cyl.t_start(0.999 * cut.lam(k + 1)) &&
            z == 1.0)
          saw_plateau = true;
        if ((r >= 1.001 * out_r || t <= cyl.t_start(1.001 * cut.lam(k))) &&
            z == 0.0)
          saw_zero = true;
      }
    }
    INFO("k=", k);
    CHECK(saw_plateau);
    CHECK(saw_zero);
    CHECK(max_grad <= cut.grad_bound(k) * (1.0 + 1e-12));
    CHECK(max_dt <= cut.dt_bound(k) * (1.0 + 1e-12));
    CHECK(max_grad <= cut.grad_sup(k) * (1.0 + 1e-12));

    // Dense sweep across the (narrow) spatial ramp at full time weight: the
    // slope must reach the analytic supremum.
    double ramp_peak = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double r = in_r + (out_r - in_r) * i / 400.0;
      const double xr[2] = {0.5 + r, 0.5};
      ramp_peak = std::max(ramp_peak, cut.grad_norm(k, cyl.t0, xr, 2));
    }
    CHECK(ramp_peak <= cut.grad_sup(k) * (1.0 + 1e-12));
    CHECK(ramp_peak >= 0.999 * cut.grad_sup(k));
  }

  // Analytic derivatives agree with difference quotients mid-ramp.
  const double rmid = 0.5 * (cut.lam(1) + cut.lam(0)) * cyl.R;
  const double x[2] = {0.5 + rmid, 0.5};
  const double tmid =
      0.5 * (cyl.t_start(cut.lam(0)) + cyl.t_start(cut.lam(1)));
  const double dt = 1e-7;
  const double fd_t =
      (cut.zeta(0, tmid + dt, x, 2) - cut.zeta(0, tmid - dt, x, 2)) /
      (2.0 * dt);
  CHECK(fd_t == doctest::Approx(cut.dzeta_dt(0, tmid, x, 2)).epsilon(1e-6));
  const double dx = 1e-7;
  const double xp[2] = {x[0] + dx, 0.5}, xm[2] = {x[0] - dx, 0.5};
  const double fd_x =
      (cut.zeta(0, tmid, xp, 2) - cut.zeta(0, tmid, xm, 2)) / (2.0 * dx);
  CHECK(std::fabs(fd_x) ==
        doctest::Approx(cut.grad_norm(0, tmid, x, 2)).epsilon(1e-6));

  CHECK_THROWS_AS(cut.zeta(9, 1.0, x, 2), OutOfDomain);
  CHECK_THROWS_AS(cut.zeta(-1, 1.0, x, 2), OutOfDomain);
  CHECK_THROWS_AS(CutoffFamily(cyl, nullptr, 3), OutOfDomain);
  CHECK_THROWS_AS(CutoffFamily(cyl, phi, -1), OutOfDomain);
}

TEST_CASE("space-time norm: constants, order, and cutoff monotonicity") {
  const auto phi = make_power(2.0);
  GridSpec g = shaped(2, 1, 16, 1.0, 1e-3, 0.1);
  const GradOrField f = fabricate(
      phi, g, [](double, double x, double y, int) { return x + 0.5 * y; },
      ramp_times(0.1, 11));
  const ParabolicCylinder cyl = centered_cyl(0.1, 0.1, 1.0);

  const ScalarField cst =
      cell_scalar(f, [](const FieldFrame&, int) { return 0.7; });
  const double inf = std::numeric_limits<double>::infinity();
  for (auto sr : {std::pair<double, double>{1, 1},
                  {2, 3},
                  {7, 1},
                  {1, 7},
                  {inf, 1},
                  {1, inf},
                  {inf, inf}}) {
    CHECK(bochner_norm(cst, sr.first, sr.second, 0, cyl, nullptr) ==
          doctest::Approx(0.7).epsilon(1e-12));
  }

  // L1-in-both-slots is additive and positively homogeneous.
  const ScalarField f1 =
      cell_scalar(f, [](const FieldFrame& fr, int c) { return fr.v[c]; });
  const ScalarField f2 = cell_scalar(
      f, [&](const FieldFrame& fr, int c) { return phi->value(fr.v[c]); });
  ScalarField combo = f1;
  for (size_t j = 0; j < combo.vals.size(); ++j)
    for (size_t i = 0; i < combo.vals[j].size(); ++i)
      combo.vals[j][i] = 2.0 * f1.vals[j][i] + 3.0 * f2.vals[j][i];
  const double lhs = bochner_norm(combo, 1, 1, 0, cyl, nullptr);
  const double rhs = 2.0 * bochner_norm(f1, 1, 1, 0, cyl, nullptr) +
                     3.0 * bochner_norm(f2, 1, 1, 0, cyl, nullptr);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  // Shrinking cutoffs can only lower the weighted mass.
  const CutoffFamily cut(cyl, phi, 6);
  double prev = bochner_norm(f1, 1, 1, 0, cyl, &cut);
  CHECK(prev > 0.0);
  for (int k = 1; k <= 6; ++k) {
    const double cur = bochner_norm(f1, 1, 1, k, cyl, &cut);
    CHECK(cur <= prev);
    prev = cur;
  }

  CHECK_THROWS_AS(bochner_norm(cst, 0.5, 1, 0, cyl, nullptr), OutOfDomain);
  CHECK_THROWS_AS(bochner_norm(cst, 1, 0.0, 0, cyl, nullptr), OutOfDomain);
  ParabolicCylinder off = cyl;
  off.x0[0] = 0.05;  // double ball pokes out of the lattice margin
  CHECK_THROWS_AS(bochner_norm(cst, 1, 1, 0, off, nullptr), OutOfDomain);
}

TEST_CASE("space-time norm converges under grid refinement") {
  // The membership test for ball cells is first order in h, so successive
  // refinements must shrink the increments.
  const auto phi = make_power(2.0);
  const auto fn = [](double t, double x, double y, int) {
    return std::sin(kPi * x) * std::sin(kPi * y) * (1.0 + 0.2 * t);
  };
  const ParabolicCylinder cyl = centered_cyl(0.1, 0.2, 0.5);
  std::vector<double> vals;
  for (int cells : {24, 48, 96}) {
    GridSpec g = shaped(2, 1, cells, 1.0, 1e-3, 0.1);
    const GradOrField f = fabricate(phi, g, fn, ramp_times(0.1, 11));
    const ScalarField v2 = cell_scalar(
        f, [](const FieldFrame& fr, int c) { return fr.v[c] * fr.v[c]; });
    vals.push_back(bochner_norm(v2, 1, 1, 0, cyl, nullptr));
  }
  const double d1 = std::fabs(vals[1] - vals[0]);
  const double d2 = std::fabs(vals[2] - vals[1]);
  CHECK(d2 <= 0.75 * d1);
  CHECK(d2 <= 0.05 * std::fabs(vals[2]));
}

TEST_CASE("truncation trace: vacuous stop, monotone masses") {
  const auto phi = make_power(3.0);
  const GradOrField f = affine_field(phi, 2, 0.6, 0.8);  // v = 1 exactly
  const ParabolicCylinder cyl = centered_cyl(0.05, 0.15, 0.5);

  SUBCASE("a top level above the range empties the second rung") {
    const DeGiorgiTrace tr = compute_trace(f, cyl, phi, 3.0, 8);
    REQUIRE(tr.W.size() == 2);
    CHECK(tr.stop_k == 1);
    CHECK(tr.W[0] > 0.0);
    CHECK(tr.W[1] == 0.0);
    CHECK(tr.Y[1] == 0.0);
    CHECK(tr.Z[1] == 0.0);
    CHECK(tr.gamma[1] == doctest::Approx(1.5));

    // A vacuous tail is a pass for every rung it reaches.
    const LevelsetReport rep = verify_levelset_lemma(tr, f, cyl, phi);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[1].vacuous);
    CHECK(rep.rows[1].lhs1 == 0.0);
    CHECK(rep.rows[1].lhs2 == 0.0);
    CHECK(rep.rows[1].c1 == 0.0);
    CHECK(!rep.all_vacuous);
    CHECK(rep.max_c < std::numeric_limits<double>::infinity());
  }

  SUBCASE("bad arguments are rejected") {
    CHECK_THROWS_AS(compute_trace(f, cyl, phi, 0.0, 4), OutOfDomain);
    CHECK_THROWS_AS(compute_trace(f, cyl, phi, -1.0, 4), OutOfDomain);
    CHECK_THROWS_AS(compute_trace(f, cyl, phi, 1.0, -1), OutOfDomain);
    const DeGiorgiTrace shallow = compute_trace(f, cyl, phi, 0.5, 2);
    if (shallow.stop_k < 0)
      CHECK_THROWS_AS(verify_levelset_lemma(shallow, f, cyl, phi),
                      OutOfDomain);
  }
}

TEST_CASE("truncation trace on a diffusion run decays through the rungs") {
  const auto phi = make_power(2.0);
  const GradOrField& f = heat_run();
  const ParabolicCylinder cyl = heat_cyl();
  const double ginf = choose_gamma_infty(f, cyl, phi);
  REQUIRE(ginf > 0.0);
  const DeGiorgiTrace tr = compute_trace(f, cyl, phi, ginf, 8);
  REQUIRE(tr.W.size() >= 2);
  for (size_t k = 0; k + 1 < tr.W.size(); ++k) {
    CHECK(tr.W[k + 1] <= tr.W[k]);
    CHECK(tr.gamma[k + 1] > tr.gamma[k]);
    CHECK(tr.Y[k] >= 0.0);
    CHECK(tr.Z[k] >= 0.0);
  }
  CHECK(tr.W.back() < tr.W.front());

  // A top level well inside the data range keeps every rung active, so the
  // growth-rate fit runs on real masses.
  const DeGiorgiTrace deep = compute_trace(f, cyl, phi, 0.3, 8);
  REQUIRE(deep.stop_k == -1);
  const LevelsetReport rep = verify_levelset_lemma(deep, f, cyl, phi);
  CHECK(!rep.all_vacuous);
  CHECK(rep.max_c > 0.0);
  CHECK(rep.max_c < std::numeric_limits<double>::infinity());
  CHECK(rep.beta_fit <= 3.2);

  // Bitwise repeatability of the whole pipeline.
  const DeGiorgiTrace tr2 = compute_trace(f, cyl, phi, ginf, 8);
  REQUIRE(tr2.W.size() == tr.W.size());
  for (size_t k = 0; k < tr.W.size(); ++k) {
    CHECK(tr2.W[k] == tr.W[k]);
    CHECK(tr2.Y[k] == tr.Y[k]);
    CHECK(tr2.Z[k] == tr.Z[k]);
  }
}

TEST_CASE("top level selection matches the closed forms") {
  // On a constant-v field the data mass W0 = phi(v) + v^2/alpha exactly,
  // and the defining equation min(rho(g) a^{(n-2)/2}, g^2/a) = kappa W0
  // can be inverted by hand.
  SUBCASE("quadratic growth, n = 2") {
    const auto phi = make_power(2.0);
    const GradOrField f = affine_field(phi, 2, 1.2, 1.6);  // v = 2
    const ParabolicCylinder cyl = centered_cyl(0.05, 0.1, 1.0);
    const double w0 = phi->value(2.0) + 4.0;  // 6
    // rho = phi for n=2: g^2/2 = W0.
    const double expect = std::sqrt(2.0 * w0);
    CHECK(choose_gamma_infty(f, cyl, phi) ==
          doctest::Approx(expect).epsilon(1e-8));
    // A calibration factor scales the target linearly.
    CHECK(choose_gamma_infty(f, cyl, phi, 2.0) ==
          doctest::Approx(std::sqrt(4.0 * w0)).epsilon(1e-8));
  }

  SUBCASE("quadratic growth, n = 1") {
    const auto phi = make_power(2.0);
    const GradOrField f = affine_field(phi, 1, 2.0, 0.0);  // v = 2
    ParabolicCylinder cyl = centered_cyl(0.05, 0.1, 1.0);
    const double w0 = 6.0;
    // rho(g) = sqrt(g^2/2) g = g^2/sqrt(2) is the smaller branch.
    const double expect = std::sqrt(std::sqrt(2.0) * w0);
    CHECK(choose_gamma_infty(f, cyl, phi) ==
          doctest::Approx(expect).epsilon(1e-8));
  }

  SUBCASE("cubic growth, n = 2, both branches of the minimum") {
    const auto phi = make_power(3.0);
    const ParabolicCylinder cyl = centered_cyl(0.05, 0.1, 1.0);
    {
      const GradOrField f = affine_field(phi, 2, 0.6, 0.8);  // v = 1
      const double w0 = 1.0 / 3.0 + 1.0;
      REQUIRE(w0 <= 9.0);  // min attained by g^3/3
      CHECK(choose_gamma_infty(f, cyl, phi) ==
            doctest::Approx(std::cbrt(3.0 * w0)).epsilon(1e-8));
    }
    {
      const GradOrField f = affine_field(phi, 2, 2.4, 3.2);  // v = 4
      const double w0 = 64.0 / 3.0 + 16.0;
      REQUIRE(w0 > 9.0);  // min attained by g^2
      CHECK(choose_gamma_infty(f, cyl, phi) ==
            doctest::Approx(std::sqrt(w0)).epsilon(1e-8));
    }
  }

  SUBCASE("scaled time window enters through the data mass") {
    const auto phi = make_power(2.0);
    const GradOrField f = affine_field(phi, 2, 1.2, 1.6);  // v = 2
    const ParabolicCylinder cyl = centered_cyl(0.05, 0.15, 0.5);
    const double w0 = 2.0 + 4.0 / 0.5;  // phi(2) + v^2/alpha
    CHECK(choose_gamma_infty(f, cyl, phi) ==
          doctest::Approx(std::sqrt(2.0 * w0)).epsilon(1e-8));
  }

  SUBCASE("a null field selects level zero") {
    const auto phi = make_power(2.0);
    GridSpec g = shaped(2, 1, 20, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi, g, [](double, double, double, int) { return 0.0; },
        ramp_times(0.05, 5));
    const ParabolicCylinder cyl = centered_cyl(0.05, 0.15, 0.5);
    CHECK(choose_gamma_infty(f, cyl, phi) == 0.0);
    CHECK_THROWS_AS(choose_gamma_infty(f, cyl, phi, 0.0), OutOfDomain);
  }
}

TEST_CASE("sup bound report is exact on constant-v fields") {
  const auto phi = make_power(3.0);
  const ParabolicCylinder cyl = centered_cyl(0.05, 0.1, 1.0);

  SUBCASE("null field gives 0 <= 0") {
    GridSpec g = shaped(2, 1, 20, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi, g, [](double, double, double, int) { return 0.0; },
        ramp_times(0.05, 5));
    const MainBoundReport rep = verify_main_bound(f, cyl, phi);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == 0.0);
    CHECK(rep.ratio == 0.0);
  }

  SUBCASE("constant v makes both sides closed-form") {
    const GradOrField f = affine_field(phi, 2, 1.2, 1.6);  // v = 2
    const MainBoundReport rep = verify_main_bound(f, cyl, phi);
    // lhs = min(rho(2), 2^2) with rho = phi for n = 2.
    CHECK(rep.lhs == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
    CHECK(rep.rhs == doctest::Approx(4.0 + 8.0 / 3.0).epsilon(1e-12));
    CHECK(rep.ratio == doctest::Approx((8.0 / 3.0) / (4.0 + 8.0 / 3.0))
                           .epsilon(1e-12));
  }

  SUBCASE("the ratio stays bounded across amplitude scalings") {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double vbar : {0.5, 1.0, 2.0, 4.0}) {
      const GradOrField f = affine_field(phi, 2, 0.6 * vbar, 0.8 * vbar);
      const MainBoundReport rep = verify_main_bound(f, cyl, phi);
      CHECK(rep.ratio > 0.0);
      lo = std::min(lo, rep.ratio);
      hi = std::max(hi, rep.ratio);
    }
    CHECK(hi / lo <= 10.0);
  }

  SUBCASE("diffusion run lands strictly inside the bound regime") {
    const MainBoundReport rep =
        verify_main_bound(heat_run(), heat_cyl(), make_power(2.0));
    CHECK(rep.rhs > 0.0);
    CHECK(rep.ratio > 0.0);
    CHECK(rep.ratio < std::numeric_limits<double>::infinity());
    const MainBoundReport rep2 =
        verify_main_bound(heat_run(), heat_cyl(), make_power(2.0));
    CHECK(rep2.lhs == rep.lhs);
    CHECK(rep2.rhs == rep.rhs);
  }
}

TEST_CASE("power comparison rows: degenerate pad versus vanishing data") {
  const auto phi3 = make_power(3.0);
  ParabolicCylinder cyl = centered_cyl(0.05, 0.1, 1.0);

  SUBCASE("null data keeps the classical pad alive") {
    GridSpec g = shaped(2, 1, 20, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi3, g, [](double, double, double, int) { return 0.0; },
        ramp_times(0.05, 5));
    cyl.alpha = 0.9;
    const DibCompareRow row = dibenedetto_compare(f, cyl, 3.0, 0.0);
    CHECK(!row.skipped);
    CHECK(row.lhs == 0.0);
    CHECK(row.rhs_new == 0.0);
    CHECK(row.rhs_dib ==
          doctest::Approx(std::pow(0.9, 3.0 / (2.0 - 3.0))).epsilon(1e-12));
    CHECK(row.rhs_dib > 0.0);
  }

  SUBCASE("p = 2 is skipped with a notice") {
    const GradOrField f = affine_field(make_power(2.0), 2, 0.6, 0.8);
    const DibCompareRow row = dibenedetto_compare(f, cyl, 2.0, 1.0);
    CHECK(row.skipped);
    CHECK(!row.notice.empty());
  }

  SUBCASE("p <= 1 is rejected") {
    const GradOrField f = affine_field(phi3, 2, 0.6, 0.8);
    CHECK_THROWS_AS(dibenedetto_compare(f, cyl, 1.0, 1.0), OutOfDomain);
  }

  SUBCASE("constant-v rows are closed-form and shrink with amplitude") {
    const GradOrField big = affine_field(phi3, 2, 0.6, 0.8);   // v = 1
    const GradOrField sml = affine_field(phi3, 2, 0.3, 0.4);   // v = 1/2
    const DibCompareRow r1 = dibenedetto_compare(big, cyl, 3.0, 1.0);
    const DibCompareRow r2 = dibenedetto_compare(sml, cyl, 3.0, 0.5);
    // nu2 = n(p-2)+4 = 6, so lhs = min(v^3, v^2) at alpha = 1.
    CHECK(r2.lhs == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(r2.rhs_new == doctest::Approx(0.25 + 0.125).epsilon(1e-12));
    CHECK(r1.lhs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r2.lhs < r1.lhs);
    CHECK(r2.rhs_new < r1.rhs_new);
    CHECK(r1.rhs_dib == std::max(r1.rhs_new, 1.0));
    CHECK(r2.rhs_dib == std::max(r2.rhs_new, 1.0));
    CHECK(r2.amplitude == 0.5);
  }
}

TEST_CASE("energy inequality rails on the diffusion run") {
  const auto phi = make_power(2.0);
  const GradOrField& f = heat_run();
  const ParabolicCylinder cyl = heat_cyl();
  const CutoffFamily cut(cyl, phi, 4);

  SUBCASE("unit weight produces a finite empirical constant") {
    const CaccioppoliReport rep =
        caccioppoli_check(f, cyl, phi, {}, cut, 1);
    CHECK(!rep.vacuous);
    CHECK(rep.lhs_sup > 0.0);
    CHECK(rep.rhs1 > 0.0);
    CHECK(rep.c_emp > 0.0);
    CHECK(rep.c_emp < 1e3);
    const CaccioppoliReport again =
        caccioppoli_check(f, cyl, phi, {}, cut, 1);
    CHECK(again.c_emp == rep.c_emp);
    CHECK(again.lhs_gradv == rep.lhs_gradv);
  }

  SUBCASE("tabulated custom weight reproduces the closed-form potential") {
    // f = 1 has H(t) = t^2/2; the trapezoid rule is exact on the linear
    // integrand, so only the piecewise-linear readback of the table (second
    // order in the step) separates the two reports.
    FChoice fc;
    fc.kind = FChoice::Custom;
    fc.fn = [](double) { return 1.0; };
    const CaccioppoliReport tab = caccioppoli_check(f, cyl, phi, fc, cut, 1);
    const CaccioppoliReport ref = caccioppoli_check(f, cyl, phi, {}, cut, 1);
    CHECK(tab.lhs_sup == doctest::Approx(ref.lhs_sup).epsilon(1e-6));
    CHECK(tab.lhs_gradv == doctest::Approx(ref.lhs_gradv).epsilon(1e-6));
    CHECK(tab.rhs1 == doctest::Approx(ref.rhs1).epsilon(1e-6));
    CHECK(tab.rhs2 == doctest::Approx(ref.rhs2).epsilon(1e-6));
  }

  SUBCASE("level indicators: active quantiles and a vacuous top") {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double q : {0.2, 0.5, 0.8}) {
      FChoice fc;
      fc.kind = FChoice::Indicator;
      fc.gamma = quantile_v_inner(f, cyl, q);
      const CaccioppoliReport rep =
          caccioppoli_check(f, cyl, phi, fc, cut, 1);
      REQUIRE(rep.has_truncated);
      CHECK(!rep.vacuous);
      CHECK(rep.c_emp > 0.0);
      CHECK(rep.cor_c_emp > 0.0);
      CHECK(rep.cor_c_emp < 1e3);
      lo = std::min(lo, rep.c_emp);
      hi = std::max(hi, rep.c_emp);
    }
    CHECK(hi / lo <= 10.0);

    FChoice top;
    top.kind = FChoice::Indicator;
    top.gamma = 2.0 * quantile_v(f, 1.0);
    const CaccioppoliReport rep = caccioppoli_check(f, cyl, phi, top, cut, 1);
    CHECK(rep.cor_vacuous);
    CHECK(rep.cor_c_emp == 0.0);
    CHECK(rep.cor_lhs_sup == 0.0);
    CHECK(rep.cor_lhs_grad == 0.0);
  }

  SUBCASE("wiring mistakes are rejected") {
    ParabolicCylinder other = cyl;
    other.R = 0.1;
    CHECK_THROWS_AS(caccioppoli_check(f, other, phi, {}, cut, 1),
                    OutOfDomain);
    FChoice broken;
    broken.kind = FChoice::Custom;
    CHECK_THROWS_AS(caccioppoli_check(f, cyl, phi, broken, cut, 1),
                    OutOfDomain);
    CHECK_THROWS_AS(caccioppoli_check(f, cyl, phi, {}, cut, 5), OutOfDomain);
  }
}

TEST_CASE("stationary sup bound and truncation cascade") {
  const auto phi = make_power(3.0);
  Ball ball;
  ball.x0[0] = 0.5;
  ball.x0[1] = 0.5;
  ball.R = 0.1;

  SUBCASE("constant v: sup equals average") {
    const GradOrField f = affine_field(phi, 2, 0.6, 0.8);
    Ball b = ball;
    b.R = 0.15;
    const StationaryReport rep = stationary_check(f, b, phi);
    CHECK(rep.ratio == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(!rep.vacuous);
    CHECK(rep.c_inf > 0.0);
    REQUIRE(rep.U.size() == 13);
    for (double u : rep.U) CHECK(u >= 0.0);
  }

  SUBCASE("null field is vacuous") {
    GridSpec g = shaped(2, 1, 20, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi, g, [](double, double, double, int) { return 0.0; },
        ramp_times(0.05, 5));
    Ball b = ball;
    b.R = 0.15;
    const StationaryReport rep = stationary_check(f, b, phi);
    CHECK(rep.vacuous);
    CHECK(rep.ratio == 0.0);
    for (double u : rep.U) CHECK(u == 0.0);
  }

  SUBCASE("steep radial growth drives the truncation masses to zero") {
    // v = 4 r^3 around the ball center, so the level cap sits far above
    // the inner sup and the cascade must die out.
    GridSpec g = shaped(2, 1, 48, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi, g,
        [](double, double x, double y, int) {
          const double r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
          return r2 * r2;
        },
        ramp_times(0.05, 3));
    const StationaryReport rep = stationary_check(f, ball, phi, 12, 64.0);
    REQUIRE(!rep.vacuous);
    REQUIRE(rep.U[0] > 0.0);
    CHECK(rep.U[12] < 1e-6 * rep.U[0]);
    // Levels follow phi'(g) g = c_k^2, i.e. g = c_k^{2/3} for cubic growth.
    for (int k = 0; k <= 12; ++k) {
      const double ck = rep.c_inf * (1.0 + std::ldexp(1.0, -k));
      CHECK(rep.gamma_levels[static_cast<size_t>(k)] ==
            doctest::Approx(std::pow(ck * ck, 1.0 / 3.0)).epsilon(1e-10));
    }
  }

  SUBCASE("stationary solve keeps a bounded sup/average ratio") {
    PresetParams prm;
    prm.p = 3.0;
    GridSpec g = shaped(2, 1, 32, 1.0, 1.0, 0.0);
    attach(&g, make_preset("radial_pharmonic", prm, g));
    const GradOrField out = solve_elliptic(phi, g);
    Ball b = ball;
    b.R = 0.15;
    const StationaryReport rep = stationary_check(out, b, phi);
    CHECK(rep.ratio > 0.0);
    CHECK(rep.ratio < 50.0);
    CHECK(!rep.vacuous);
  }

  SUBCASE("bad geometry and parameters are rejected") {
    const GradOrField f = affine_field(phi, 2, 0.6, 0.8);
    Ball wide = ball;
    wide.R = 0.3;  // double ball leaves the margin
    CHECK_THROWS_AS(stationary_check(f, wide, phi), OutOfDomain);
    Ball degenerate = ball;
    degenerate.R = 0.0;
    CHECK_THROWS_AS(stationary_check(f, degenerate, phi),
                    AssumptionViolation);
    CHECK_THROWS_AS(stationary_check(f, ball, phi, -1), OutOfDomain);
    CHECK_THROWS_AS(stationary_check(f, ball, phi, 12, 0.0), OutOfDomain);
  }
}

TEST_CASE("second-difference mass: exact on quadratics, zero on affine") {
  const auto phi = make_power(2.0);
  const ParabolicCylinder cyl = centered_cyl(0.05, 0.15, 0.5);

  SUBCASE("affine fields carry no curvature") {
    const GradOrField f = affine_field(phi, 2, 0.6, 0.8);
    const W21Report rep = w21_check(f, cyl, phi);
    // Second differences of exact node data leave only rounding dust.
    CHECK(rep.lhs1 <= 1e-10);
    CHECK(rep.lhs2 <= 1e-10);
    CHECK(rep.rhs > 0.0);
    CHECK(rep.ratio1 <= 1e-10);
    CHECK(rep.ratio2 <= 1e-10);
  }

  SUBCASE("a paraboloid has constant curvature 2 sqrt 2") {
    GridSpec g = shaped(2, 1, 20, 1.0, 1e-3, 0.05);
    const GradOrField f = fabricate(
        phi, g,
        [](double, double x, double y, int) {
          return (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
        },
        ramp_times(0.05, 5));
    const W21Report rep = w21_check(f, cyl, phi);
    CHECK(rep.lhs1 == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-10));
    // Quadratic growth: the flux equals the gradient, same curvature mass.
    CHECK(rep.lhs2 == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-10));
    CHECK(rep.rhs == doctest::Approx(rep.rhs_flux).epsilon(1e-14));
    CHECK(rep.ratio1 == doctest::Approx(rep.lhs1 / rep.rhs).epsilon(1e-12));
  }

  SUBCASE("diffusion-run ratios are stable under refinement") {
    std::vector<double> r1, r2;
    for (int cells : {20, 40}) {
      GridSpec g = shaped(2, 1, cells, 1.0, 1e-3, 0.02);
      attach(&g, make_preset("eigenmode", {}, g));
      const GradOrField out = solve_parabolic(make_power(2.0), g);
      const ParabolicCylinder c2 = centered_cyl(0.02, 0.12, 0.3);
      const W21Report rep = w21_check(out, c2, phi);
      CHECK(rep.ratio1 > 0.0);
      CHECK(rep.ratio2 > 0.0);
      r1.push_back(rep.ratio1);
      r2.push_back(rep.ratio2);
    }
    CHECK(std::fabs(r1[1] - r1[0]) <= 0.15 * r1[1]);
    CHECK(std::fabs(r2[1] - r2[0]) <= 0.15 * r2[1]);
  }
}

TEST_CASE("oscillation decay fit") {
  SUBCASE("constant gradients are reported unresolved") {
    const auto phi = make_power(2.0);
    const GradOrField f = affine_field(phi, 2, 0.6, 0.8);
    const ParabolicCylinder cyl = centered_cyl(0.05, 0.15, 0.5);
    const HoelderReport rep = hoelder_diagnostic(f, cyl, phi);
    CHECK(rep.unresolved);
  }

  SUBCASE("smooth diffusion shows near-Lipschitz decay") {
    const auto phi = make_power(2.0);
    GridSpec g = shaped(2, 1, 48, 1.0, 1e-3, 0.02);
    attach(&g, make_preset("eigenmode", {}, g));
    const GradOrField out = solve_parabolic(phi, g);
    const ParabolicCylinder cyl = centered_cyl(0.02, 0.2, 0.1);
    const HoelderReport rep = hoelder_diagnostic(out, cyl, phi);
    REQUIRE(!rep.unresolved);
    REQUIRE(rep.radii.size() == 4);
    for (double o : rep.oscs) CHECK(o > 0.0);
    CHECK(rep.mu_fit >= 0.9);
    CHECK(rep.kappa_at_sup == doctest::Approx(1.0));  // quadratic growth
  }

  SUBCASE("degenerate front shows a fractional exponent") {
    const double p = 4.0;
    const auto phi = make_power(p);
    PresetParams prm;
    prm.p = p;
    prm.mass = 0.25;
    prm.t_offset = 1.0;
    GridSpec g = shaped(1, 1, 512, 4.0, 5e-4, 0.2);
    g.snapshot_every = 2;
    const Preset ps = make_preset("barenblatt", prm, g);
    attach(&g, ps);
    const GradOrField out = solve_parabolic(phi, g);

    // Locate the interface from the reference profile and center on it.
    const Snapshot& fin = out.snaps.back();
    double lo = 2.0, hi = 4.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double x[2] = {mid, 0.0};
      (ps.exact(fin.t, x, 0) > 0.0 ? lo : hi) = mid;
    }
    ParabolicCylinder cyl;
    cyl.t0 = fin.t;
    cyl.x0[0] = 0.5 * (lo + hi);
    cyl.R = 0.12;
    cyl.alpha = 0.3;  // short window: the front barely moves inside it
    const HoelderReport rep = hoelder_diagnostic(out, cyl, phi);
    REQUIRE(!rep.unresolved);
    INFO("mu=", rep.mu_fit);
    CHECK(rep.mu_fit > 0.0);
    CHECK(rep.mu_fit < 1.0);
  }
}

TEST_CASE("level inflation constants stay uniform in the rung index") {
  const std::vector<OrliczPtr> family = {
      make_power(1.5), make_power(2.0), make_power(3.0),
      make_shifted(make_power(3.0), 1.0)};
  for (const auto& phi : family) {
    for (int kind : {0, 1}) {
      for (int k = 0; k <= 12; ++k) {
        const double c = level_inflation_constant(phi, kind, 2.3, k);
        INFO(phi->name(), " kind=", kind, " k=", k);
        CHECK(c > 0.2);
        CHECK(c <= 2.0);
      }
    }
  }
  // First rung of the quadratic scale is exactly one half:
  // t^2 <= 2 (t^2 - 0) for every t > gamma_1.
  CHECK(level_inflation_constant(make_power(2.0), 0, 1.0, 0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(level_inflation_constant(make_power(2.0), 0, 0.0, 0),
                  OutOfDomain);
  CHECK_THROWS_AS(level_inflation_constant(make_power(2.0), 0, 1.0, -1),
                  OutOfDomain);
}
