#include <phicaloric/tensor_ops.hpp>

#include <phicaloric/errors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace phicaloric {

namespace {

void check_index(int i, int n, const char* what) {
  if (i < 0 || i >= n) throw OutOfDomain(std::string(what) + " out of range");
}

std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i)
    out.push_back(std::exp(llo + (lhi - llo) * i / (n - 1)));
  return out;
}

}  // namespace

GradMatrix::GradMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || rows > 3 || cols < 1 || cols > 3)
    throw OutOfDomain("gradient matrices are limited to 1..3 per side");
}

double& GradMatrix::at(int i, int j) {
  check_index(i, rows_, "row");
  check_index(j, cols_, "column");
  return v_[static_cast<size_t>(i * cols_ + j)];
}

double GradMatrix::at(int i, int j) const {
  check_index(i, rows_, "row");
  check_index(j, cols_, "column");
  return v_[static_cast<size_t>(i * cols_ + j)];
}

double GradMatrix::norm() const { return std::sqrt(dot(*this)); }

double GradMatrix::dot(const GradMatrix& o) const {
  check_shape(o);
  double s = 0.0;
  for (int k = 0; k < rows_ * cols_; ++k)
    s += v_[static_cast<size_t>(k)] * o.v_[static_cast<size_t>(k)];
  return s;
}

void GradMatrix::check_shape(const GradMatrix& o) const {
  if (o.rows_ != rows_ || o.cols_ != cols_)
    throw OutOfDomain("gradient matrix shapes do not match");
}

GradMatrix GradMatrix::operator+(const GradMatrix& o) const {
  check_shape(o);
  GradMatrix r(rows_, cols_);
  for (int k = 0; k < rows_ * cols_; ++k)
    r.v_[static_cast<size_t>(k)] =
        v_[static_cast<size_t>(k)] + o.v_[static_cast<size_t>(k)];
  return r;
}

GradMatrix GradMatrix::operator-(const GradMatrix& o) const {
  check_shape(o);
  GradMatrix r(rows_, cols_);
  for (int k = 0; k < rows_ * cols_; ++k)
    r.v_[static_cast<size_t>(k)] =
        v_[static_cast<size_t>(k)] - o.v_[static_cast<size_t>(k)];
  return r;
}

GradMatrix GradMatrix::operator*(double s) const {
  GradMatrix r(rows_, cols_);
  for (int k = 0; k < rows_ * cols_; ++k)
    r.v_[static_cast<size_t>(k)] = v_[static_cast<size_t>(k)] * s;
  return r;
}

GradMatrix a_map(const OrliczFunction& phi, const GradMatrix& P) {
  const double r = P.norm();
  if (r == 0.0) return GradMatrix(P.rows(), P.cols());
  return P * (phi.deriv(r) / r);
}

GradMatrix v_map(const OrliczFunction& phi, const GradMatrix& P) {
  const double r = P.norm();
  if (r == 0.0) return GradMatrix(P.rows(), P.cols());
  return P * (std::sqrt(phi.deriv(r) * r) / r);
}

GradMatrix s_epsilon(const GradMatrix& Q, double eps) {
  if (!(eps >= 0.0)) throw OutOfDomain("truncation level must be >= 0");
  if (eps == 0.0) return Q;
  const double r = Q.norm();
  if (r <= eps) return GradMatrix(Q.rows(), Q.cols());
  return Q * ((r - eps) / r);
}

HammerReport hammer_check(const OrliczPtr& phi, const GradMatrix& P,
                          const GradMatrix& Q) {
  if (!phi) throw OutOfDomain("hammer_check needs a function");
  const GradMatrix D = P - Q;
  const double t = D.norm();
  const GradMatrix dA = a_map(*phi, P) - a_map(*phi, Q);
  const GradMatrix dV = v_map(*phi, P) - v_map(*phi, Q);
  auto shifted = make_shifted(phi, P.norm());

  HammerReport rep;
  rep.q1 = dA.dot(D);
  rep.q2 = shifted->value(t);
  rep.q3 = dV.dot(dV);
  rep.q5 = dA.norm();
  rep.q6 = shifted->deriv(t);
  rep.q4 = conjugate_numeric(*shifted, rep.q5);
  return rep;
}

namespace {

void validate_config(const EnvelopeConfig& cfg) {
  if (cfg.rows < 1 || cfg.rows > 3 || cfg.cols < 1 || cfg.cols > 3)
    throw OutOfDomain("sampler shape is limited to 1..3 per side");
  if (cfg.random_pairs < 0)
    throw OutOfDomain("random pair count must be >= 0");
  if (!(cfg.norm_lo > 0.0) || !(cfg.norm_hi >= cfg.norm_lo))
    throw OutOfDomain("norm range must satisfy 0 < lo <= hi");
}

std::vector<GradMatrix> base_directions(int rows, int cols) {
  GradMatrix d0(rows, cols), d1(rows, cols), d2(rows, cols), d3(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      d0.at(i, j) = 1.0;
      d1.at(i, j) = (idx % 2 == 0) ? 1.0 : -1.0;
      d3.at(i, j) = static_cast<double>(idx + 1);
      ++idx;
    }
  }
  d2.at(0, 0) = 1.0;
  std::vector<GradMatrix> dirs{d0, d1, d2, d3};
  for (auto& d : dirs) d = d * (1.0 / d.norm());
  return dirs;
}

GradMatrix random_unit(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  GradMatrix m(rows, cols);
  double n = 0.0;
  while (n == 0.0) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m.at(i, j) = g(rng);
    n = m.norm();
  }
  return m * (1.0 / n);
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

// Shared pair sweep: a deterministic structured set that anchors the
// extreme regimes (coincident, opposite, orthogonal and generic directions
// at norm ratios from 0 to 1e3) plus seeded random pairs.  fn returns false
// for pairs it could not use; those are tallied separately by the caller.
template <typename Fn>
void sweep_pairs(const EnvelopeConfig& cfg, Fn&& fn, long* samples,
                 long* skipped) {
  validate_config(cfg);
  const auto dirs = base_directions(cfg.rows, cfg.cols);
  const GradMatrix neg0 = dirs[0] * -1.0;
  const std::pair<const GradMatrix*, const GradMatrix*> patterns[] = {
      {&dirs[0], &dirs[0]},
      {&dirs[0], &neg0},
      {&dirs[0], &dirs[1]},
      {&dirs[2], &dirs[3]}};
  const double ratios[] = {0.0, 1e-8, 1e-3, 0.5, 1.0 - 1e-8, 1.0, 2.0, 1e3};

  for (double s : logspace(cfg.norm_lo, cfg.norm_hi, 7)) {
    for (double r : ratios) {
      for (const auto& pat : patterns) {
        const GradMatrix P = *pat.first * s;
        const GradMatrix Q = *pat.second * (s * r);
        if ((P - Q).norm() == 0.0) continue;  // never emitted as a sample
        fn(P, Q);
        ++*samples;
      }
    }
  }

  std::mt19937_64 rng(cfg.seed);
  for (int k = 0; k < cfg.random_pairs; ++k) {
    const GradMatrix P = random_unit(rng, cfg.rows, cfg.cols) *
                         log_uniform(rng, cfg.norm_lo, cfg.norm_hi);
    const GradMatrix Q = random_unit(rng, cfg.rows, cfg.cols) *
                         log_uniform(rng, cfg.norm_lo, cfg.norm_hi);
    if ((P - Q).norm() == 0.0) {
      ++*skipped;
      continue;
    }
    fn(P, Q);
    ++*samples;
  }
}

}  // namespace

EnvelopeReport hammer_envelope(const OrliczPtr& phi,
                               const EnvelopeConfig& cfg) {
  if (!phi) throw OutOfDomain("hammer_envelope needs a function");
  constexpr int kBands = 7;
  double lo[kBands], hi[kBands];
  std::fill(lo, lo + kBands, std::numeric_limits<double>::infinity());
  std::fill(hi, hi + kBands, 0.0);

  EnvelopeReport rep;
  sweep_pairs(
      cfg,
      [&](const GradMatrix& P, const GradMatrix& Q) {
        const HammerReport h = hammer_check(phi, P, Q);
        const double r[kBands] = {h.q1 / h.q2, h.q1 / h.q3, h.q1 / h.q4,
                                  h.q2 / h.q3, h.q2 / h.q4, h.q3 / h.q4,
                                  h.q5 / h.q6};
        for (int k = 0; k < kBands; ++k) {
          lo[k] = std::min(lo[k], r[k]);
          hi[k] = std::max(hi[k], r[k]);
        }
      },
      &rep.samples, &rep.skipped);

  EnvelopeReport::Band* bands[kBands] = {&rep.r12, &rep.r13, &rep.r14,
                                         &rep.r23, &rep.r24, &rep.r34,
                                         &rep.r56};
  for (int k = 0; k < kBands; ++k) {
    bands[k]->lo = lo[k];
    bands[k]->hi = hi[k];
  }
  return rep;
}

ShiftChangeReport shift_change_check(const OrliczPtr& phi, double delta,
                                     const EnvelopeConfig& cfg) {
  if (!phi) throw OutOfDomain("shift_change_check needs a function");
  if (!(delta > 0.0)) throw OutOfDomain("delta must be positive");

  ShiftChangeReport rep;
  long samples = 0, skipped = 0;
  const auto grid = logspace(1e-3, 1e3, 13);
  sweep_pairs(
      cfg,
      [&](const GradMatrix& P, const GradMatrix& Q) {
        const double aP = P.norm(), aQ = Q.norm();
        auto phiP = make_shifted(phi, aP);
        auto phiQ = make_shifted(phi, aQ);
        const GradMatrix dV = v_map(*phi, P) - v_map(*phi, Q);
        const double pen = delta * dV.dot(dV);
        const double scale = std::max(aP, aQ);
        const double dscale = phi->deriv(scale);
        for (double u : grid) {
          const double t = scale * u;
          const double num = phiP->value(t) - pen;
          if (num > 0.0)
            rep.c_direct = std::max(rep.c_direct, num / phiQ->value(t));
          const double s = dscale * u;
          const double cnum = conjugate_numeric(*phiP, s) - pen;
          if (cnum > 0.0)
            rep.c_conjugate = std::max(
                rep.c_conjugate, cnum / conjugate_numeric(*phiQ, s));
        }
      },
      &samples, &skipped);
  return rep;
}

}  // namespace phicaloric
