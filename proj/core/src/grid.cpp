#include <phicaloric/grid.hpp>

#include <phicaloric/errors.hpp>

#include <cmath>

namespace phicaloric {

double grid_h(const GridSpec& g) { return g.extent[0] / g.cells[0]; }

void validate_grid(const GridSpec& g) {
  if (g.n != 1 && g.n != 2)
    throw AssumptionViolation("spatial dimension must be 1 or 2");
  if (g.N < 1 || g.N > 3)
    throw AssumptionViolation("component count must be 1..3");
  const int axes = g.n;
  for (int a = 0; a < axes; ++a) {
    if (g.cells[a] < 8)
      throw AssumptionViolation("need at least 8 cells per axis");
    if (!(g.extent[a] > 0.0))
      throw AssumptionViolation("extent must be positive");
  }
  const double h = grid_h(g);
  if (!(h > 0.0)) throw AssumptionViolation("spacing must be positive");
  if (g.n == 2) {
    const double hy = g.extent[1] / g.cells[1];
    if (std::abs(hy - h) > 1e-12 * h)
      throw AssumptionViolation("cells must be square");
  }
  if (!(g.dt > 0.0)) throw AssumptionViolation("dt must be positive");
  if (!(g.T >= 0.0)) throw AssumptionViolation("T must be nonnegative");
  if (g.snapshot_every < 1)
    throw AssumptionViolation("snapshot stride must be >= 1");
  if (!g.bc) throw AssumptionViolation("Dirichlet trace function is required");
}

int axis_nodes(const GridSpec& g, int axis) {
  return (axis < g.n ? g.cells[axis] : 0) + 2;
}

std::vector<double> axis_node_coords(const GridSpec& g, int axis) {
  const int nn = axis_nodes(g, axis);
  const double L = axis < g.n ? g.extent[axis] : 0.0;
  const double h = axis < g.n ? grid_h(g) : 0.0;
  std::vector<double> c(static_cast<size_t>(nn));
  c[0] = 0.0;
  for (int i = 1; i + 1 < nn; ++i) c[static_cast<size_t>(i)] = (i - 0.5) * h;
  c[static_cast<size_t>(nn) - 1] = L;
  return c;
}

std::vector<double> axis_segment_lengths(const GridSpec& g, int axis) {
  const auto c = axis_node_coords(g, axis);
  std::vector<double> s(c.size() - 1);
  for (size_t i = 0; i + 1 < c.size(); ++i) s[i] = c[i + 1] - c[i];
  return s;
}

int node_count(const GridSpec& g) {
  int t = axis_nodes(g, 0);
  if (g.n == 2) t *= axis_nodes(g, 1);
  return t;
}

int cell_count(const GridSpec& g) {
  int t = g.cells[0];
  if (g.n == 2) t *= g.cells[1];
  return t;
}

int node_index(const GridSpec& g, int ix, int iy) {
  return g.n == 1 ? ix : ix * axis_nodes(g, 1) + iy;
}

int cell_index(const GridSpec& g, int cx, int cy) {
  return g.n == 1 ? cx : cx * g.cells[1] + cy;
}

bool node_is_interior(const GridSpec& g, int ix, int iy) {
  if (ix < 1 || ix > g.cells[0]) return false;
  if (g.n == 2 && (iy < 1 || iy > g.cells[1])) return false;
  return true;
}

void cell_center(const GridSpec& g, int cx, int cy, double* out) {
  const double h = grid_h(g);
  out[0] = (cx + 0.5) * h;
  out[1] = g.n == 2 ? (cy + 0.5) * h : 0.0;
}

std::vector<double> sample_initial(const GridSpec& g) {
  validate_grid(g);
  if (!g.u0) throw AssumptionViolation("initial datum function is required");
  const int nx = axis_nodes(g, 0), ny = g.n == 2 ? axis_nodes(g, 1) : 1;
  const auto cx = axis_node_coords(g, 0);
  const auto cy = g.n == 2 ? axis_node_coords(g, 1) : std::vector<double>{0.0};
  std::vector<double> u(static_cast<size_t>(node_count(g)) * g.N, 0.0);

  double scale = 0.0;
  double mismatch = 0.0;
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      const double x[2] = {cx[static_cast<size_t>(ix)],
                           cy[static_cast<size_t>(iy)]};
      const int base = node_index(g, ix, iy) * g.N;
      for (int c = 0; c < g.N; ++c) {
        const double ui = g.u0(x, c);
        if (node_is_interior(g, ix, iy)) {
          u[static_cast<size_t>(base + c)] = ui;
        } else {
          const double bi = g.bc(0.0, x, c);
          u[static_cast<size_t>(base + c)] = bi;
          mismatch = std::max(mismatch, std::abs(ui - bi));
        }
        scale = std::max(scale, std::abs(ui));
      }
    }
  }
  if (mismatch > 1e-9 * (1.0 + scale))
    throw AssumptionViolation(
        "Dirichlet trace disagrees with the initial datum at t=0");
  return u;
}

void apply_bc(const GridSpec& g, double t, std::vector<double>* u) {
  const int nx = axis_nodes(g, 0), ny = g.n == 2 ? axis_nodes(g, 1) : 1;
  const auto cx = axis_node_coords(g, 0);
  const auto cy = g.n == 2 ? axis_node_coords(g, 1) : std::vector<double>{0.0};
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      if (node_is_interior(g, ix, iy)) continue;
      const double x[2] = {cx[static_cast<size_t>(ix)],
                           cy[static_cast<size_t>(iy)]};
      const int base = node_index(g, ix, iy) * g.N;
      for (int c = 0; c < g.N; ++c)
        (*u)[static_cast<size_t>(base + c)] = g.bc(t, x, c);
    }
  }
}

}  // namespace phicaloric
