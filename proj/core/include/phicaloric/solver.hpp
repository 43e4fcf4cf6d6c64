#pragma once

#include <phicaloric/fields.hpp>
#include <phicaloric/grid.hpp>
#include <phicaloric/orlicz.hpp>

#include <vector>

namespace phicaloric {

struct EpsSchedule {
  double floor = 1e-8;  // regularization used for the reported solution
  double start = 1e-2;  // ladder entry point when the direct solve stalls
  bool direct_first = true;
};

struct SolveOptions {
  EpsSchedule eps;
  double newton_rtol = 1e-10;
  int newton_max = 50;
  int max_halvings = 20;
  int picard_sweeps = 5;
  double cg_rtol = 1e-9;
  int cg_max = 20000;
  int pseudo_steps_max = 60;   // elliptic continuation length
  double pseudo_tau0 = 1.0;
  double pseudo_tau_cap = 1e12;
};

struct StepReport {
  int newton_iters = 0;
  long cg_iters = 0;
  bool used_picard = false;
  double final_residual = 0.0;
  double eps_used = 0.0;
  std::vector<double> residual_history;
};

// One backward-Euler step: solves M(u-prev.u) + dt*(dE_eps(u) - M f) = 0 for
// the interior nodes, boundary set from bc at prev.t+dt.  The energy density
// is the shifted function phi_eps, so the diffusivity stays finite at zero
// gradient.
Snapshot step_implicit(const OrliczPtr& phi, const GridSpec& grid,
                       const Snapshot& prev, double eps_reg,
                       const SolveOptions& opt = {}, StepReport* rep = nullptr);

// Time march 0..T with the eps continuation ladder; returns snapshots at the
// configured stride plus derived fields.
GradOrField solve_parabolic(const OrliczPtr& phi, const GridSpec& grid,
                            const SolveOptions& opt = {});

// Pseudo-transient continuation to div A_eps(grad u) = 0 with the given
// Dirichlet trace; returns the stationary state as a single-snapshot field.
GradOrField solve_elliptic(const OrliczPtr& phi, const GridSpec& grid,
                           const SolveOptions& opt = {});

// Scheme energy sum(measure * phi_eps(|grad u|)) over the mesh decomposition
// used by the solver (exposed for dissipation checks).
double scheme_energy(const OrliczPtr& phi, const GridSpec& grid,
                     const std::vector<double>& u, double eps_reg);

}  // namespace phicaloric
