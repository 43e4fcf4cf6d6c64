#pragma once

#include <functional>
#include <vector>

namespace phicaloric {

// Rectangular grid on [0,extent0] x [0,extent1] with square cells.  Unknowns
// live at cell centers; Dirichlet trace nodes sit on the boundary itself, so
// the node coordinates along an axis are 0, h/2, 3h/2, ..., L-h/2, L.
struct GridSpec {
  int n = 1;  // spatial dimension, 1 or 2
  int N = 1;  // solution components, 1..3
  double extent[2] = {1.0, 1.0};
  int cells[2] = {64, 64};  // cells per axis; cells[1] ignored for n=1
  double dt = 1e-3;
  double T = 0.1;
  int snapshot_every = 1;

  // bc(t, x, comp) on boundary nodes; u0(x, comp) at cell centers;
  // forcing(t, x, comp) at cell centers, may be null (zero).
  std::function<double(double, const double*, int)> bc;
  std::function<double(const double*, int)> u0;
  std::function<double(double, const double*, int)> forcing;
};

// Throws AssumptionViolation on bad shape parameters (h<=0, dt<=0, cells<8,
// non-square cells, missing bc) and on Dirichlet data inconsistent with u0
// at t=0.
void validate_grid(const GridSpec& g);

double grid_h(const GridSpec& g);
int axis_nodes(const GridSpec& g, int axis);       // cells+2
std::vector<double> axis_node_coords(const GridSpec& g, int axis);
std::vector<double> axis_segment_lengths(const GridSpec& g, int axis);

int node_count(const GridSpec& g);
int cell_count(const GridSpec& g);
int node_index(const GridSpec& g, int ix, int iy = 0);
int cell_index(const GridSpec& g, int cx, int cy = 0);
bool node_is_interior(const GridSpec& g, int ix, int iy = 0);

// Coordinates of a cell center (cx, cy are 0-based cell indices).
void cell_center(const GridSpec& g, int cx, int cy, double* out);

// Node-value vector of size node_count*N: interior from u0, boundary from
// bc(0,.).  Checks trace consistency (u0 evaluated on the boundary must
// match bc at t=0 within 1e-9 of the data scale).
std::vector<double> sample_initial(const GridSpec& g);

// Overwrites boundary entries of u with bc(t,.).
void apply_bc(const GridSpec& g, double t, std::vector<double>* u);

struct Snapshot {
  double t = 0.0;
  std::vector<double> u;  // node_count*N, component-interleaved
};

}  // namespace phicaloric
