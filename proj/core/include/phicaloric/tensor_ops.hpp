#pragma once

#include <phicaloric/orlicz.hpp>

#include <array>
#include <cstdint>

namespace phicaloric {

// Dense N x n matrix of gradient components (N components, n space
// dimensions), capped at 3 x 3.  Fixed storage keeps the hot maps
// allocation free.
class GradMatrix {
 public:
  GradMatrix(int rows, int cols);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& at(int i, int j);
  double at(int i, int j) const;

  double norm() const;               // Frobenius
  double dot(const GradMatrix& o) const;

  GradMatrix operator+(const GradMatrix& o) const;
  GradMatrix operator-(const GradMatrix& o) const;
  GradMatrix operator*(double s) const;

 private:
  void check_shape(const GradMatrix& o) const;

  int rows_ = 0;
  int cols_ = 0;
  std::array<double, 9> v_{};
};

// Flux map A(P) = phi'(|P|) P / |P|, with A(0) = 0.
GradMatrix a_map(const OrliczFunction& phi, const GradMatrix& P);

// Quasi-metric map V(P) = sqrt(phi'(|P|) |P|) P / |P|, with V(0) = 0.
GradMatrix v_map(const OrliczFunction& phi, const GradMatrix& P);

// Radial truncation S_eps(Q) = (|Q| - eps)_+ Q / |Q|; 1-Lipschitz.
GradMatrix s_epsilon(const GradMatrix& Q, double eps);

// The six pairwise-comparable quantities attached to a pair of gradients:
//   q1 = (A(P) - A(Q)) : (P - Q)
//   q2 = phi_{|P|}(|P - Q|)        (shifted function at the increment)
//   q3 = |V(P) - V(Q)|^2
//   q4 = (phi_{|P|})^*(|A(P) - A(Q)|)
//   q5 = |A(P) - A(Q)|
//   q6 = phi_{|P|}'(|P - Q|)
// q1..q4 are mutually comparable, as are q5 and q6.
struct HammerReport {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double q4 = 0.0;
  double q5 = 0.0;
  double q6 = 0.0;
};

HammerReport hammer_check(const OrliczPtr& phi, const GradMatrix& P,
                          const GradMatrix& Q);

struct EnvelopeConfig {
  int rows = 2;
  int cols = 2;
  int random_pairs = 4000;
  std::uint64_t seed = 1;
  double norm_lo = 1e-3;
  double norm_hi = 1e3;
};

// Observed min/max of each ratio over the sampled pairs.
struct EnvelopeReport {
  struct Band {
    double lo = 0.0;
    double hi = 0.0;
  };
  Band r12, r13, r14, r23, r24, r34, r56;
  long samples = 0;
  long skipped = 0;  // degenerate pairs (P == Q) that were not counted
};

// Sweeps structured direction patterns plus seeded random pairs and records
// the envelope of all six pairwise ratios among q1..q4 and of q5/q6.
EnvelopeReport hammer_envelope(const OrliczPtr& phi,
                               const EnvelopeConfig& cfg);

// Smallest constants closing the shift-change bounds over the sample sweep:
//   phi_{|P|}(t)      <= c_direct    * phi_{|Q|}(t) + delta |V(P) - V(Q)|^2
//   (phi_{|P|})^*(s)  <= c_conjugate * (phi_{|Q|})^*(s) + delta |V(P)-V(Q)|^2
struct ShiftChangeReport {
  double c_direct = 0.0;
  double c_conjugate = 0.0;
};

ShiftChangeReport shift_change_check(const OrliczPtr& phi, double delta,
                                     const EnvelopeConfig& cfg);

}  // namespace phicaloric
