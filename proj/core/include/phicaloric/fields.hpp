#pragma once

#include <phicaloric/grid.hpp>
#include <phicaloric/orlicz.hpp>

#include <cstdint>
#include <vector>

namespace phicaloric {

// Derived quantities of one snapshot, all co-located at cell centers.
//
// Stencil contract (bit-exact, fixed order):
//  * face gradients are the exact difference quotients between adjacent
//    nodes along an axis (including the half-length boundary segments);
//  * the cell gradient interpolates the two adjacent face gradients
//    linearly from the face midpoints to the cell center (plain central
//    difference away from the boundary), which is exact for quadratics;
//  * V is v_map(phi, grad) per cell; gradV is the central difference of
//    each V component, defined where both neighbors exist (gradv_valid).
struct FieldFrame {
  double t = 0.0;
  std::vector<double> grad;         // cells*N*n, [cell][comp][axis]
  std::vector<double> v;            // cells, Frobenius norm of grad
  std::vector<double> V;            // cells*N*n
  std::vector<double> gradV;        // cells*N*n*n, [cell][comp][axis][diff]
  std::vector<double> gradVsq;      // cells, |gradV|^2 (0 where invalid)
  std::vector<std::uint8_t> gradV_valid;  // cells
};

struct SolveStats {
  long newton_iters = 0;
  long cg_iters = 0;
  long picard_fallbacks = 0;
  long eps_ladders = 0;
  double final_eps = 0.0;
  int max_newton_per_step = 0;
  std::vector<double> energy_trace;  // scheme energy after each step
};

struct GradOrField {
  GridSpec grid;
  std::vector<Snapshot> snaps;
  std::vector<FieldFrame> frames;  // aligned with snaps
  SolveStats stats;
};

// Exact per-face difference quotients along an axis.  For axis=0 the layout
// is [row-of-cells][face 0..cellsx], rows being the cellsy cell rows (a
// single row in 1-D); for axis=1 it is [column][face 0..cellsy].
std::vector<double> face_gradient(const GridSpec& g, const std::vector<double>& u,
                                  int axis, int comp);

// Flux-difference divergence at cells from per-axis face fields laid out as
// face_gradient returns them (fy ignored for n=1).
std::vector<double> face_divergence(const GridSpec& g,
                                    const std::vector<double>& fx,
                                    const std::vector<double>& fy);

FieldFrame derive_frame(const OrliczFunction& phi, const GridSpec& g,
                        const Snapshot& snap);

GradOrField discrete_fields(const OrliczPtr& phi, const GridSpec& g,
                            std::vector<Snapshot> snaps);

}  // namespace phicaloric
