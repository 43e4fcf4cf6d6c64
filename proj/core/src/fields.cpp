#include <phicaloric/fields.hpp>

#include <phicaloric/errors.hpp>
#include <phicaloric/tensor_ops.hpp>

#include <cmath>

namespace phicaloric {

namespace {

void check_state_size(const GridSpec& g, const std::vector<double>& u) {
  if (static_cast<int>(u.size()) != node_count(g) * g.N)
    throw OutOfDomain("state vector does not match the grid");
}

// Cell-centered gradient along one axis from the two adjacent segment
// slopes, interpolated linearly from the segment midpoints to the center.
double colocate(const std::vector<double>& coords, int cellk, double sL,
                double sR) {
  const size_t k = static_cast<size_t>(cellk);
  const double mL = 0.5 * (coords[k] + coords[k + 1]);
  const double mR = 0.5 * (coords[k + 1] + coords[k + 2]);
  const double t = (coords[k + 1] - mL) / (mR - mL);
  return (1.0 - t) * sL + t * sR;
}

}  // namespace

std::vector<double> face_gradient(const GridSpec& g,
                                  const std::vector<double>& u, int axis,
                                  int comp) {
  check_state_size(g, u);
  if (axis < 0 || axis >= g.n) throw OutOfDomain("axis out of range");
  if (comp < 0 || comp >= g.N) throw OutOfDomain("component out of range");
  const auto seg = axis_segment_lengths(g, axis);
  const int ncx = g.cells[0];
  const int ncy = g.n == 2 ? g.cells[1] : 1;

  if (axis == 0) {
    std::vector<double> out(static_cast<size_t>(ncy) * (ncx + 1));
    for (int j = 0; j < ncy; ++j) {
      const int iy = g.n == 2 ? j + 1 : 0;
      for (int i = 0; i <= ncx; ++i) {
        const double a = u[static_cast<size_t>(node_index(g, i, iy) * g.N + comp)];
        const double b =
            u[static_cast<size_t>(node_index(g, i + 1, iy) * g.N + comp)];
        out[static_cast<size_t>(j) * (ncx + 1) + static_cast<size_t>(i)] =
            (b - a) / seg[static_cast<size_t>(i)];
      }
    }
    return out;
  }
  std::vector<double> out(static_cast<size_t>(ncx) * (ncy + 1));
  for (int i = 0; i < ncx; ++i) {
    for (int j = 0; j <= ncy; ++j) {
      const double a =
          u[static_cast<size_t>(node_index(g, i + 1, j) * g.N + comp)];
      const double b =
          u[static_cast<size_t>(node_index(g, i + 1, j + 1) * g.N + comp)];
      out[static_cast<size_t>(i) * (ncy + 1) + static_cast<size_t>(j)] =
          (b - a) / seg[static_cast<size_t>(j)];
    }
  }
  return out;
}

std::vector<double> face_divergence(const GridSpec& g,
                                    const std::vector<double>& fx,
                                    const std::vector<double>& fy) {
  const int ncx = g.cells[0];
  const int ncy = g.n == 2 ? g.cells[1] : 1;
  const double h = grid_h(g);
  if (static_cast<int>(fx.size()) != ncy * (ncx + 1))
    throw OutOfDomain("x face field does not match the grid");
  if (g.n == 2 && static_cast<int>(fy.size()) != ncx * (ncy + 1))
    throw OutOfDomain("y face field does not match the grid");
  std::vector<double> div(static_cast<size_t>(cell_count(g)), 0.0);
  for (int i = 0; i < ncx; ++i) {
    for (int j = 0; j < ncy; ++j) {
      double d = (fx[static_cast<size_t>(j) * (ncx + 1) + i + 1] -
                  fx[static_cast<size_t>(j) * (ncx + 1) + i]) /
                 h;
      if (g.n == 2)
        d += (fy[static_cast<size_t>(i) * (ncy + 1) + j + 1] -
              fy[static_cast<size_t>(i) * (ncy + 1) + j]) /
             h;
      div[static_cast<size_t>(cell_index(g, i, j))] = d;
    }
  }
  return div;
}

FieldFrame derive_frame(const OrliczFunction& phi, const GridSpec& g,
                        const Snapshot& snap) {
  check_state_size(g, snap.u);
  const int ncx = g.cells[0];
  const int ncy = g.n == 2 ? g.cells[1] : 1;
  const int cells = cell_count(g);
  const int N = g.N, n = g.n;
  const double h = grid_h(g);
  const auto coords_x = axis_node_coords(g, 0);
  const auto segs_x = axis_segment_lengths(g, 0);
  const auto coords_y = g.n == 2 ? axis_node_coords(g, 1) : std::vector<double>{};
  const auto segs_y = g.n == 2 ? axis_segment_lengths(g, 1) : std::vector<double>{};

  FieldFrame fr;
  fr.t = snap.t;
  fr.grad.assign(static_cast<size_t>(cells) * N * n, 0.0);
  fr.v.assign(static_cast<size_t>(cells), 0.0);
  fr.V.assign(static_cast<size_t>(cells) * N * n, 0.0);
  fr.gradV.assign(static_cast<size_t>(cells) * N * n * n, 0.0);
  fr.gradVsq.assign(static_cast<size_t>(cells), 0.0);
  fr.gradV_valid.assign(static_cast<size_t>(cells), 0);

  auto uat = [&](int ix, int iy, int c) {
    return snap.u[static_cast<size_t>(node_index(g, ix, iy) * N + c)];
  };

  for (int i = 0; i < ncx; ++i) {
    for (int j = 0; j < ncy; ++j) {
      const int cell = cell_index(g, i, j);
      const int iy = g.n == 2 ? j + 1 : 0;
      GradMatrix P(N, n);
      for (int c = 0; c < N; ++c) {
        const double sLx = (uat(i + 1, iy, c) - uat(i, iy, c)) /
                           segs_x[static_cast<size_t>(i)];
        const double sRx = (uat(i + 2, iy, c) - uat(i + 1, iy, c)) /
                           segs_x[static_cast<size_t>(i) + 1];
        P.at(c, 0) = colocate(coords_x, i, sLx, sRx);
        if (n == 2) {
          const double sLy = (uat(i + 1, j + 1, c) - uat(i + 1, j, c)) /
                             segs_y[static_cast<size_t>(j)];
          const double sRy = (uat(i + 1, j + 2, c) - uat(i + 1, j + 1, c)) /
                             segs_y[static_cast<size_t>(j) + 1];
          P.at(c, 1) = colocate(coords_y, j, sLy, sRy);
        }
      }
      fr.v[static_cast<size_t>(cell)] = P.norm();
      const GradMatrix Vc = v_map(phi, P);
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < n; ++d) {
          const size_t at = (static_cast<size_t>(cell) * N + c) * n + d;
          fr.grad[at] = P.at(c, d);
          fr.V[at] = Vc.at(c, d);
        }
    }
  }

  // Central differences of the V components where both cell neighbors exist.
  for (int i = 0; i < ncx; ++i) {
    for (int j = 0; j < ncy; ++j) {
      const bool ok_x = i >= 1 && i + 1 < ncx;
      const bool ok_y = g.n == 1 || (j >= 1 && j + 1 < ncy);
      const int cell = cell_index(g, i, j);
      if (!ok_x || !ok_y) continue;
      fr.gradV_valid[static_cast<size_t>(cell)] = 1;
      double sq = 0.0;
      for (int c = 0; c < N; ++c) {
        for (int d = 0; d < n; ++d) {
          for (int e = 0; e < n; ++e) {
            const int plus =
                e == 0 ? cell_index(g, i + 1, j) : cell_index(g, i, j + 1);
            const int minus =
                e == 0 ? cell_index(g, i - 1, j) : cell_index(g, i, j - 1);
            const size_t comp = static_cast<size_t>(c) * n + d;
            const double dv =
                (fr.V[static_cast<size_t>(plus) * N * n + comp] -
                 fr.V[static_cast<size_t>(minus) * N * n + comp]) /
                (2.0 * h);
            fr.gradV[(static_cast<size_t>(cell) * N * n + comp) * n +
                     static_cast<size_t>(e)] = dv;
            sq += dv * dv;
          }
        }
      }
      fr.gradVsq[static_cast<size_t>(cell)] = sq;
    }
  }
  return fr;
}

GradOrField discrete_fields(const OrliczPtr& phi, const GridSpec& g,
                            std::vector<Snapshot> snaps) {
  if (!phi) throw OutOfDomain("discrete_fields needs a function");
  GradOrField out;
  out.grid = g;
  out.snaps = std::move(snaps);
  out.frames.reserve(out.snaps.size());
  for (const auto& s : out.snaps) out.frames.push_back(derive_frame(*phi, g, s));
  return out;
}

}  // namespace phicaloric
