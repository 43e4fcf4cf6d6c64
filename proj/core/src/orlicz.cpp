#include <phicaloric/orlicz.hpp>

#include <phicaloric/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <unordered_map>

namespace phicaloric {
namespace {

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

void require_nonneg(double t, const char* who) {
  if (!(t >= 0.0))
    throw OutOfDomain(std::string(who) + ": expected a nonnegative argument, got " + fmt_g(t));
}

// 16-point Gauss-Legendre rule on [-1, 1] (positive half; the rule is
// symmetric).
constexpr int kGaussN = 8;
constexpr double kGaussX[kGaussN] = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGaussW[kGaussN] = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

template <class F>
double gauss16(const F& f, double lo, double hi) {
  const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
  double s = 0.0;
  for (int i = 0; i < kGaussN; ++i)
    s += kGaussW[i] * (f(c - h * kGaussX[i]) + f(c + h * kGaussX[i]));
  return s * h;
}

double shifted_deriv_at(const OrliczFunction& base, double a, double t) {
  const double u = a + t;
  return base.deriv(u) * (t / u);
}

double shifted_deriv2_at(const OrliczFunction& base, double a, double t) {
  const double u = a + t;
  return base.deriv2(u) * (t / u) + base.deriv(u) * (a / (u * u));
}

// ---------------------------------------------------------------------------
// t^p / p

class PowerPhi final : public OrliczFunction {
 public:
  explicit PowerPhi(double p) : p_(p) {}
  double p() const { return p_; }

  double value(double t) const override {
    require_nonneg(t, "power::value");
    return std::pow(t, p_) / p_;
  }
  double deriv(double t) const override {
    require_nonneg(t, "power::deriv");
    return std::pow(t, p_ - 1.0);
  }
  double deriv2(double t) const override {
    require_nonneg(t, "power::deriv2");
    return (p_ - 1.0) * std::pow(t, p_ - 2.0);
  }
  std::string name() const override { return "power(p=" + fmt_g(p_) + ")"; }

 private:
  double p_;
};

// ---------------------------------------------------------------------------
// C^2 quintic bridge between two branches on [w0, w1], matching value and two
// derivatives at both ends.

class QuinticBlend {
 public:
  QuinticBlend() = default;
  QuinticBlend(double w0, double w1, double v0, double d0, double c0,
               double v1, double d1, double c1)
      : w0_(w0), h_(w1 - w0) {
    a_[0] = v0;
    a_[1] = h_ * d0;
    a_[2] = 0.5 * h_ * h_ * c0;
    const double r0 = v1 - a_[0] - a_[1] - a_[2];
    const double r1 = h_ * d1 - a_[1] - 2.0 * a_[2];
    const double r2 = h_ * h_ * c1 - 2.0 * a_[2];
    a_[3] = 10.0 * r0 - 4.0 * r1 + 0.5 * r2;
    a_[4] = -15.0 * r0 + 7.0 * r1 - r2;
    a_[5] = 6.0 * r0 - 3.0 * r1 + 0.5 * r2;
  }

  double value(double t) const {
    const double s = (t - w0_) / h_;
    double v = a_[5];
    for (int k = 4; k >= 0; --k) v = v * s + a_[k];
    return v;
  }
  double deriv(double t) const {
    const double s = (t - w0_) / h_;
    double v = 5.0 * a_[5];
    for (int k = 4; k >= 1; --k) v = v * s + k * a_[k];
    return v / h_;
  }
  double deriv2(double t) const {
    const double s = (t - w0_) / h_;
    double v = 20.0 * a_[5];
    for (int k = 4; k >= 2; --k) v = v * s + k * (k - 1) * a_[k];
    return v / (h_ * h_);
  }

 private:
  double w0_ = 0.0, h_ = 1.0;
  double a_[6] = {0, 0, 0, 0, 0, 0};
};

// ---------------------------------------------------------------------------
// max{t^p, t^q} / min{t^p, t^q} with the kink at t = 1 bridged C^2.

constexpr double kKinkLo = 1.0 - 1e-3;
constexpr double kKinkHi = 1.0 + 1e-3;

double branch_val(double e, double t) { return std::pow(t, e); }
double branch_d1(double e, double t) { return e * std::pow(t, e - 1.0); }
double branch_d2(double e, double t) { return e * (e - 1.0) * std::pow(t, e - 2.0); }

class MaxMinPower final : public OrliczFunction {
 public:
  MaxMinPower(double e1, double e2, bool take_max) : is_max_(take_max) {
    if (!(e1 > 1.0) || !(e2 > 1.0))
      throw AssumptionViolation("max/min power: exponents must exceed 1, got " +
                                fmt_g(e1) + " and " + fmt_g(e2));
    lo_ = std::min(e1, e2);
    hi_ = std::max(e1, e2);
    kinked_ = lo_ < hi_;
    // For t < 1 the smaller exponent gives the larger value, so the left
    // branch of max is t^lo and of min is t^hi; they swap on the right.
    eL_ = is_max_ ? lo_ : hi_;
    eR_ = is_max_ ? hi_ : lo_;
    if (kinked_)
      blend_ = QuinticBlend(kKinkLo, kKinkHi, branch_val(eL_, kKinkLo),
                            branch_d1(eL_, kKinkLo), branch_d2(eL_, kKinkLo),
                            branch_val(eR_, kKinkHi), branch_d1(eR_, kKinkHi),
                            branch_d2(eR_, kKinkHi));
  }

  double value(double t) const override {
    require_nonneg(t, "max/min power::value");
    if (!kinked_ || t <= kKinkLo) return branch_val(eL_, t);
    if (t >= kKinkHi) return branch_val(eR_, t);
    return blend_.value(t);
  }
  double deriv(double t) const override {
    require_nonneg(t, "max/min power::deriv");
    if (!kinked_ || t <= kKinkLo) return branch_d1(eL_, t);
    if (t >= kKinkHi) return branch_d1(eR_, t);
    return blend_.deriv(t);
  }
  double deriv2(double t) const override {
    require_nonneg(t, "max/min power::deriv2");
    if (!kinked_ || t <= kKinkLo) return branch_d2(eL_, t);
    if (t >= kKinkHi) return branch_d2(eR_, t);
    return blend_.deriv2(t);
  }
  std::string name() const override {
    return std::string(is_max_ ? "max_power(" : "min_power(") + fmt_g(lo_) +
           "," + fmt_g(hi_) + ")";
  }
  std::vector<Window> exclusions() const override {
    if (!kinked_) return {};
    return {{kKinkLo, kKinkHi}};
  }

 private:
  bool is_max_;
  bool kinked_ = false;
  double lo_ = 0.0, hi_ = 0.0;
  double eL_ = 0.0, eR_ = 0.0;
  QuinticBlend blend_;
};

// ---------------------------------------------------------------------------
// phi_a

class ShiftedPhi final : public OrliczFunction {
 public:
  // power_exp is the base exponent when the base is a pure power (enables
  // the closed form), NaN otherwise.
  ShiftedPhi(OrliczPtr base, double a, double power_exp)
      : base_(std::move(base)), a_(a), p_(power_exp) {}

  const OrliczPtr& base() const { return base_; }
  double shift() const { return a_; }

  double value(double t) const override {
    require_nonneg(t, "shifted::value");
    if (!std::isnan(p_)) return detail::shifted_power_value(p_, a_, t);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = memo_.find(t);
      if (it != memo_.end()) return it->second;
    }
    const double v = detail::shifted_value_by_quadrature(*base_, a_, t);
    std::lock_guard<std::mutex> lock(mu_);
    if (memo_.size() < (1u << 15)) memo_.emplace(t, v);
    return v;
  }
  double deriv(double t) const override {
    require_nonneg(t, "shifted::deriv");
    return shifted_deriv_at(*base_, a_, t);
  }
  double deriv2(double t) const override {
    require_nonneg(t, "shifted::deriv2");
    return shifted_deriv2_at(*base_, a_, t);
  }
  std::string name() const override {
    return "shifted(" + base_->name() + ", a=" + fmt_g(a_) + ")";
  }
  std::vector<Window> exclusions() const override {
    std::vector<Window> out;
    for (auto [w0, w1] : base_->exclusions()) {
      const double lo = std::max(0.0, w0 - a_), hi = w1 - a_;
      if (hi > 0.0 && hi > lo) out.emplace_back(lo, hi);
    }
    return out;
  }

 private:
  OrliczPtr base_;
  double a_;
  double p_;
  mutable std::mutex mu_;
  mutable std::unordered_map<double, double> memo_;
};

// ---------------------------------------------------------------------------
// Tabulated kind: monotone slope-limited cubics through (log t, log phi')
// with power-law continuation past the sampled range.

class TablePhi final : public OrliczFunction {
 public:
  TablePhi(std::vector<double> ts, std::vector<double> ds) {
    const size_t n = ts.size();
    if (n != ds.size())
      throw AssumptionViolation("table: t and phi' sample counts differ");
    if (n < 2) throw AssumptionViolation("table: need at least two samples");
    for (size_t i = 0; i < n; ++i)
      if (!(ts[i] > 0.0) || !(ds[i] > 0.0))
        throw AssumptionViolation("table: samples must be positive");
    for (size_t i = 0; i + 1 < n; ++i) {
      if (!(ts[i + 1] > ts[i]))
        throw AssumptionViolation("table: t samples must be strictly increasing");
      if (!(ds[i + 1] > ds[i]))
        throw AssumptionViolation(
            "table: phi' samples must be strictly increasing");
    }
    t_ = std::move(ts);
    x_.resize(n);
    y_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      x_[i] = std::log(t_[i]);
      y_[i] = std::log(ds[i]);
    }
    std::vector<double> h(n - 1), sec(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      sec[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    // Slope-limited weighted harmonic means keep the interpolant monotone in
    // log-log, hence phi' monotone and phi convex.
    m_.resize(n);
    m_.front() = sec.front();
    m_.back() = sec.back();
    for (size_t i = 1; i + 1 < n; ++i) {
      const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
      m_[i] = (w1 + w2) / (w1 / sec[i - 1] + w2 / sec[i]);
    }
    // Cumulative integral of phi' at the knots; below the first knot the
    // power continuation integrates in closed form.
    cum_.resize(n);
    cum_[0] = ds[0] * t_[0] / (m_[0] + 1.0);
    for (size_t i = 0; i + 1 < n; ++i)
      cum_[i + 1] = cum_[i] + integrate_log(x_[i], x_[i + 1]);
  }

  double value(double t) const override {
    require_nonneg(t, "table::value");
    if (t == 0.0) return 0.0;
    if (t <= t_.front())
      return cum_.front() * std::pow(t / t_.front(), m_.front() + 1.0);
    if (t >= t_.back()) {
      const double r = m_.back() + 1.0;
      const double dlast = std::exp(y_.back());
      return cum_.back() +
             dlast * t_.back() / r * (std::pow(t / t_.back(), r) - 1.0);
    }
    const double u = std::log(t);
    const size_t i = interval(u);
    return cum_[i] + integrate_log(x_[i], u);
  }
  double deriv(double t) const override {
    require_nonneg(t, "table::deriv");
    if (t == 0.0) return 0.0;
    return std::exp(eval_log(std::log(t), nullptr));
  }
  double deriv2(double t) const override {
    require_nonneg(t, "table::deriv2");
    if (t == 0.0) return 0.0;
    double slope = 0.0;
    const double d = std::exp(eval_log(std::log(t), &slope));
    return d * slope / t;
  }
  std::string name() const override {
    return "table(n=" + std::to_string(t_.size()) + ")";
  }

 private:
  size_t interval(double u) const {
    size_t i = static_cast<size_t>(
        std::upper_bound(x_.begin(), x_.end(), u) - x_.begin());
    if (i == 0) return 0;
    if (i >= x_.size()) return x_.size() - 2;
    return i - 1;
  }

  double eval_log(double u, double* slope) const {
    if (u <= x_.front()) {
      if (slope) *slope = m_.front();
      return y_.front() + m_.front() * (u - x_.front());
    }
    if (u >= x_.back()) {
      if (slope) *slope = m_.back();
      return y_.back() + m_.back() * (u - x_.back());
    }
    const size_t i = interval(u);
    const double h = x_[i + 1] - x_[i], s = (u - x_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    if (slope) {
      const double g00 = 6 * s2 - 6 * s, g10 = 3 * s2 - 4 * s + 1;
      const double g01 = 6 * s - 6 * s2, g11 = 3 * s2 - 2 * s;
      *slope = (g00 * y_[i] + g01 * y_[i + 1]) / h + g10 * m_[i] + g11 * m_[i + 1];
    }
    return h00 * y_[i] + h10 * h * m_[i] + h01 * y_[i + 1] + h11 * h * m_[i + 1];
  }

  // integral of phi'(e^u) e^u du over [ua, ub], both inside the table
  double integrate_log(double ua, double ub) const {
    if (ub <= ua) return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil((ub - ua) / 0.5)));
    double sum = 0.0;
    for (int k = 0; k < panels; ++k) {
      const double a = ua + (ub - ua) * k / panels;
      const double b = ua + (ub - ua) * (k + 1) / panels;
      sum += gauss16(
          [&](double u) { return std::exp(eval_log(u, nullptr) + u); }, a, b);
    }
    return sum;
  }

  std::vector<double> t_, x_, y_, m_, cum_;
};

// ---------------------------------------------------------------------------
// Convex conjugate as an object; everything routes through the maximizer.

class ConjugatePhi final : public OrliczFunction {
 public:
  explicit ConjugatePhi(OrliczPtr base) : base_(std::move(base)) {
    for (auto [w0, w1] : base_->exclusions()) {
      // The conjugate inherits the blend region through phi'.
      const double s0 = base_->deriv(w0), s1 = base_->deriv(w1);
      excl_.emplace_back(std::min(s0, s1), std::max(s0, s1));
    }
  }

  double value(double s) const override { return conjugate_numeric(*base_, s); }
  double deriv(double s) const override { return conjugate_argmax(*base_, s); }
  double deriv2(double s) const override {
    const double t = conjugate_argmax(*base_, s);
    return 1.0 / base_->deriv2(t);
  }
  std::string name() const override {
    return "conjugate(" + base_->name() + ")";
  }
  std::vector<Window> exclusions() const override { return excl_; }

 private:
  OrliczPtr base_;
  std::vector<Window> excl_;
};

}  // namespace

// ---------------------------------------------------------------------------

namespace detail {

double shifted_power_value(double p, double a, double t) {
  require_nonneg(t, "shifted_power_value");
  if (t == 0.0) return 0.0;
  if (a <= 0.0) return std::pow(t, p) / p;
  const double x = t / a;
  if (x <= 0.05) {
    // a^p sum_m C(p-2, m) x^{m+2}/(m+2); avoids the cancellation of the
    // closed form when t << a.
    double coef = 1.0, xm = 1.0, sum = 0.0;
    for (int m = 0; m < 64; ++m) {
      const double term = coef * xm / (m + 2);
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
      coef *= (p - 2.0 - m) / (m + 1.0);
      xm *= x;
    }
    return std::pow(a, p) * x * x * sum;
  }
  const double l = std::log1p(x);
  const double ep = std::expm1(p * l);
  const double em = std::expm1((p - 1.0) * l);
  return std::pow(a, p) * (ep / p - em / (p - 1.0));
}

double shifted_value_by_quadrature(const OrliczFunction& phi, double a,
                                   double t) {
  require_nonneg(t, "shifted_value_by_quadrature");
  require_nonneg(a, "shifted_value_by_quadrature");
  if (t == 0.0) return 0.0;
  auto g = [&](double s) { return phi.deriv(a + s) * (s / (a + s)); };
  // Dyadic pieces resolve the scale change across s ~ a.
  const int kmax = 40;
  double sum = gauss16(g, 0.0, std::ldexp(t, -kmax));
  for (int k = kmax - 1; k >= 0; --k)
    sum += gauss16(g, std::ldexp(t, -(k + 1)), std::ldexp(t, -k));
  return sum;
}

double shifted_value(const OrliczFunction& phi, double a, double t) {
  require_nonneg(a, "shifted_value");
  if (a == 0.0) return phi.value(t);
  if (auto* pw = dynamic_cast<const PowerPhi*>(&phi))
    return shifted_power_value(pw->p(), a, t);
  if (auto* sh = dynamic_cast<const ShiftedPhi*>(&phi))
    return shifted_value(*sh->base(), sh->shift() + a, t);
  return shifted_value_by_quadrature(phi, a, t);
}

}  // namespace detail

// ---------------------------------------------------------------------------

OrliczPtr make_power(double p) {
  if (!(p > 1.0))
    throw AssumptionViolation("power: exponent must exceed 1, got " + fmt_g(p));
  return std::make_shared<PowerPhi>(p);
}

OrliczPtr make_max_power(double p, double q) {
  return std::make_shared<MaxMinPower>(p, q, true);
}

OrliczPtr make_min_power(double p, double q) {
  return std::make_shared<MaxMinPower>(p, q, false);
}

OrliczPtr make_shifted(OrliczPtr base, double a) {
  if (!base) throw OutOfDomain("shifted: null base");
  if (!(a >= 0.0))
    throw OutOfDomain("shifted: shift must be nonnegative, got " + fmt_g(a));
  if (a == 0.0) return base;
  if (auto sh = std::dynamic_pointer_cast<const ShiftedPhi>(base))
    return make_shifted(sh->base(), sh->shift() + a);
  double p = std::numeric_limits<double>::quiet_NaN();
  if (auto pw = std::dynamic_pointer_cast<const PowerPhi>(base)) p = pw->p();
  return std::make_shared<ShiftedPhi>(std::move(base), a, p);
}

OrliczPtr make_table(std::vector<double> t, std::vector<double> dphi) {
  return std::make_shared<TablePhi>(std::move(t), std::move(dphi));
}

OrliczPtr make_conjugate(OrliczPtr base) {
  if (!base) throw OutOfDomain("conjugate: null base");
  return std::make_shared<ConjugatePhi>(std::move(base));
}

// ---------------------------------------------------------------------------

Characteristics characteristics(const OrliczFunction& phi, double t_lo,
                                double t_hi, int points) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo) || points < 2)
    throw OutOfDomain("characteristics: bad scan range");
  const auto windows = phi.exclusions();
  auto excluded = [&](double t) {
    for (auto [w0, w1] : windows)
      if (t > w0 && t < w1) return true;
    return false;
  };
  Characteristics ch;
  ch.char_lo = std::numeric_limits<double>::infinity();
  ch.char_hi = 0.0;
  ch.delta2 = 0.0;
  const double la = std::log(t_lo), lb = std::log(t_hi);
  for (int i = 0; i < points; ++i) {
    const double t = std::exp(la + (lb - la) * i / (points - 1));
    const double v = phi.value(t);
    if (v > 0.0) ch.delta2 = std::max(ch.delta2, phi.value(2.0 * t) / v);
    if (excluded(t)) continue;
    const double d = phi.deriv(t);
    if (!(d > 0.0))
      throw AssumptionViolation(phi.name() +
                                ": derivative not positive at t=" + fmt_g(t));
    const double r = phi.deriv2(t) * t / d;
    ch.char_lo = std::min(ch.char_lo, r);
    ch.char_hi = std::max(ch.char_hi, r);
  }
  if (!(ch.char_lo > 0.0))
    throw AssumptionViolation(phi.name() + ": curvature ratio not positive");
  return ch;
}

// ---------------------------------------------------------------------------

double conjugate_argmax(const OrliczFunction& phi, double s) {
  require_nonneg(s, "conjugate");
  if (s == 0.0) return 0.0;
  double lo, hi, t = 1.0;
  if (phi.deriv(t) >= s) {
    while (phi.deriv(t) > s) {
      t *= 0.5;
      if (t < 1e-300) return 0.0;
    }
    lo = t;
    hi = 2.0 * t;
  } else {
    while (phi.deriv(t) < s) {
      t *= 2.0;
      if (t > 1e300)
        throw NonConvergence("conjugate: phi' never reaches s=" + fmt_g(s) +
                             " for " + phi.name());
    }
    hi = t;
    lo = 0.5 * t;
  }
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (phi.deriv(mid) < s ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double conjugate_numeric(const OrliczFunction& phi, double s) {
  require_nonneg(s, "conjugate");
  if (s == 0.0) return 0.0;
  const double t = conjugate_argmax(phi, s);
  return std::max(0.0, s * t - phi.value(t));
}

double conjugate(const OrliczFunction& phi, double s) {
  require_nonneg(s, "conjugate");
  if (s == 0.0) return 0.0;
  if (auto* pw = dynamic_cast<const PowerPhi*>(&phi)) {
    const double pc = pw->p() / (pw->p() - 1.0);
    return std::pow(s, pc) / pc;
  }
  return conjugate_numeric(phi, s);
}

// ---------------------------------------------------------------------------

QSelection select_q(const OrliczFunction& phi) {
  const auto ch = characteristics(phi);

  // Sample phi_a(eta_j t_i) once; every candidate exponent reuses the matrix.
  constexpr int nA = 6, nT = 9, nJ = 31;
  const double as[nA] = {0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3};
  std::array<double, nA * nT * nJ> m{};
  auto at = [&](int a, int i, int j) -> double& {
    return m[(a * nT + i) * nJ + j];
  };
  for (int a = 0; a < nA; ++a)
    for (int i = 0; i < nT; ++i) {
      const double t = std::exp(std::log(1e-3) +
                                (std::log(1e3) - std::log(1e-3)) * i / (nT - 1));
      for (int j = 0; j < nJ; ++j)
        at(a, i, j) = detail::shifted_value(phi, as[a], std::ldexp(t, -j));
    }

  auto validate = [&](double q, double* c_out) {
    const double qp = q / (q - 1.0);
    double cj[nJ];
    for (int j = 0; j < nJ; ++j) {
      const double scale = std::pow(std::ldexp(1.0, -j), qp);
      double c = 0.0;
      for (int a = 0; a < nA; ++a)
        for (int i = 0; i < nT; ++i)
          c = std::max(c, at(a, i, j) / (scale * at(a, i, 0)));
      cj[j] = c;
    }
    *c_out = *std::max_element(cj, cj + nJ);
    return cj[30] <= 1.05 * cj[15] && *c_out <= 100.0;
  };

  const double q_formula = std::max(2.0, ch.char_hi + 1.0);
  double c_val = 0.0;
  if (validate(q_formula, &c_val)) return {q_formula, c_val, true};

  const double q_max =
      std::max({4.0, ch.char_hi + 2.0, 2.0 + 1.0 / ch.char_lo});
  for (int k = 0;; ++k) {
    const double q = 2.0 + 0.1 * k;
    if (q > q_max + 1e-9) break;
    if (validate(q, &c_val)) return {q, c_val, false};
  }
  throw AssumptionViolation("select_q: no exponent up to " + fmt_g(q_max) +
                            " validates for " + phi.name());
}

// ---------------------------------------------------------------------------

double invert_phiprime_t(const OrliczFunction& phi, double c) {
  require_nonneg(c, "invert_phiprime_t");
  if (c == 0.0) return 0.0;
  const double target = c * c;
  auto f = [&](double g) { return phi.deriv(g) * g; };
  double lo, hi, g = 1.0;
  if (f(g) >= target) {
    while (f(g) > target) {
      g *= 0.5;
      if (g < 1e-300) return 0.0;
    }
    lo = g;
    hi = 2.0 * g;
  } else {
    while (f(g) < target) {
      g *= 2.0;
      if (g > 1e300)
        throw NonConvergence("invert_phiprime_t: no solution below 1e300");
    }
    hi = g;
    lo = 0.5 * g;
  }
  for (int it = 0; it < 140; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

double rho(const OrliczFunction& phi, int n, double t) {
  if (n < 1) throw OutOfDomain("rho: dimension must be >= 1, got " + std::to_string(n));
  require_nonneg(t, "rho");
  if (t == 0.0) return 0.0;
  return std::pow(phi.value(t), 0.5 * n) * std::pow(t, 2.0 - n);
}

RhoAdmissibility rho_admissible(const OrliczFunction& phi, int n, double t_lo,
                                double t_hi, int points) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo) || points < 2)
    throw OutOfDomain("rho_admissible: bad scan range");
  const double la = std::log(t_lo), lb = std::log(t_hi);
  double run = 0.0, worst = 1.0;
  for (int i = 0; i < points; ++i) {
    const double t = std::exp(la + (lb - la) * i / (points - 1));
    const double r = rho(phi, n, t);
    run = std::max(run, r);
    if (r > 0.0) worst = std::max(worst, run / r);
  }
  return {worst <= 4.0, worst};
}

double kappa(const OrliczFunction& phi, double t) {
  require_nonneg(t, "kappa");
  const double c = phi.deriv2(t);
  if (!(c > 0.0))
    throw AssumptionViolation(phi.name() +
                              ": curvature not positive at t=" + fmt_g(t));
  const double r = std::sqrt(c);
  return std::max(r, 1.0 / r);
}

double level_G(const OrliczFunction& phi, double gamma, double t) {
  require_nonneg(gamma, "level_G");
  require_nonneg(t, "level_G");
  const double root = std::sqrt(phi.deriv(t) * t);
  const double cut = std::sqrt(phi.deriv(gamma) * gamma);
  return std::max(0.0, root - cut);
}

double level_H(double gamma, double t) {
  return std::max(0.0, t * t - gamma * gamma);
}

}  // namespace phicaloric
