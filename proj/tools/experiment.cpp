#include "experiment.hpp"

#include <phicaloric/cylinder.hpp>
#include <phicaloric/errors.hpp>
#include <phicaloric/iteration.hpp>
#include <phicaloric/presets.hpp>
#include <phicaloric/solver.hpp>

#include "phicaloric_version.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace phicaloric::runner {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config --

namespace {

[[noreturn]] void bad(const std::string& ptr, const std::string& what) {
  throw ConfigError(ptr, what);
}

void reject_unknown(const json& j, const std::string& ptr,
                    const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) bad(ptr + "." + it.key(), "unknown key");
}

double get_num(const json& j, const std::string& ptr, const char* key,
               double def, bool required = false) {
  if (!j.contains(key)) {
    if (required) bad(ptr + "." + key, "missing required number");
    return def;
  }
  const json& v = j.at(key);
  if (!v.is_number()) bad(ptr + "." + key, "expected a number");
  return v.get<double>();
}

long long get_int(const json& j, const std::string& ptr, const char* key,
                  long long def, bool required = false) {
  if (!j.contains(key)) {
    if (required) bad(ptr + "." + key, "missing required integer");
    return def;
  }
  const json& v = j.at(key);
  if (!v.is_number_integer()) bad(ptr + "." + key, "expected an integer");
  return v.get<long long>();
}

std::string get_str(const json& j, const std::string& ptr, const char* key,
                    const std::string& def, bool required = false) {
  if (!j.contains(key)) {
    if (required) bad(ptr + "." + key, "missing required string");
    return def;
  }
  const json& v = j.at(key);
  if (!v.is_string()) bad(ptr + "." + key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& ptr, const char* key,
              bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean()) bad(ptr + "." + key, "expected a boolean");
  return v.get<bool>();
}

PhiSpec parse_phi(const json& j, const std::string& ptr) {
  if (!j.is_object()) bad(ptr, "expected an object");
  reject_unknown(j, ptr, {"kind", "p", "q", "shift"});
  PhiSpec s;
  s.kind = get_str(j, ptr, "kind", "power");
  static const std::set<std::string> kinds = {"power", "max_power",
                                              "min_power", "shifted_power"};
  if (!kinds.count(s.kind))
    bad(ptr + ".kind",
        "unknown kind '" + s.kind +
            "' (power | max_power | min_power | shifted_power)");
  s.p = get_num(j, ptr, "p", 3.0, true);
  if (!(s.p > 1.0)) bad(ptr + ".p", "exponent must exceed 1");
  if (s.kind == "max_power" || s.kind == "min_power") {
    s.q = get_num(j, ptr, "q", 0.0, true);
    if (!(s.q > 1.0)) bad(ptr + ".q", "exponent must exceed 1");
  }
  if (s.kind == "shifted_power") {
    s.shift = get_num(j, ptr, "shift", 0.0, true);
    if (!(s.shift >= 0.0)) bad(ptr + ".shift", "shift must be >= 0");
  }
  return s;
}

GridSpec parse_grid(const json& j, const std::string& ptr) {
  if (!j.is_object()) bad(ptr, "expected an object");
  reject_unknown(j, ptr,
                 {"n", "N", "cells", "extent", "dt", "T", "snapshot_every"});
  GridSpec g;
  g.n = static_cast<int>(get_int(j, ptr, "n", 2));
  if (g.n != 1 && g.n != 2) bad(ptr + ".n", "dimension must be 1 or 2");
  g.N = static_cast<int>(get_int(j, ptr, "N", 1));
  if (g.N < 1 || g.N > 3) bad(ptr + ".N", "components must be 1..3");
  if (j.contains("cells") && j.at("cells").is_array()) {
    const json& c = j.at("cells");
    if (c.size() != 2) bad(ptr + ".cells", "expected 2 entries");
    for (int a = 0; a < 2; ++a) {
      if (!c[a].is_number_integer())
        bad(ptr + ".cells", "expected integers");
      g.cells[a] = c[a].get<int>();
    }
  } else {
    const int c = static_cast<int>(get_int(j, ptr, "cells", 32, true));
    g.cells[0] = g.cells[1] = c;
  }
  if (g.cells[0] < 8 || (g.n == 2 && g.cells[1] < 8))
    bad(ptr + ".cells", "need at least 8 cells per axis");
  if (j.contains("extent") && j.at("extent").is_array()) {
    const json& e = j.at("extent");
    if (e.size() != 2) bad(ptr + ".extent", "expected 2 entries");
    for (int a = 0; a < 2; ++a) {
      if (!e[a].is_number()) bad(ptr + ".extent", "expected numbers");
      g.extent[a] = e[a].get<double>();
    }
  } else {
    const double e = get_num(j, ptr, "extent", 1.0);
    g.extent[0] = g.extent[1] = e;
  }
  if (!(g.extent[0] > 0.0) || !(g.extent[1] > 0.0))
    bad(ptr + ".extent", "extent must be positive");
  g.dt = get_num(j, ptr, "dt", 1e-3);
  if (!(g.dt > 0.0)) bad(ptr + ".dt", "dt must be positive");
  g.T = get_num(j, ptr, "T", 0.05);
  if (!(g.T >= 0.0)) bad(ptr + ".T", "T must be >= 0");
  g.snapshot_every = static_cast<int>(get_int(j, ptr, "snapshot_every", 1));
  if (g.snapshot_every < 1) bad(ptr + ".snapshot_every", "must be >= 1");
  return g;
}

RunSpec parse_run(const json& j, const std::string& ptr) {
  if (!j.is_object()) bad(ptr, "expected an object");
  reject_unknown(j, ptr,
                 {"id", "preset", "amplitude", "seed", "elliptic", "mass",
                  "t_offset", "center"});
  RunSpec r;
  r.id = get_str(j, ptr, "id", "", true);
  if (r.id.empty()) bad(ptr + ".id", "must be nonempty");
  if (r.id.find_first_of(",/\\ \t") != std::string::npos)
    bad(ptr + ".id", "must not contain separators or spaces");
  r.preset = get_str(j, ptr, "preset", "", true);
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), r.preset) == names.end())
    bad(ptr + ".preset", "unknown preset '" + r.preset + "'");
  r.amplitude = get_num(j, ptr, "amplitude", 1.0);
  if (!(r.amplitude > 0.0)) bad(ptr + ".amplitude", "must be positive");
  const long long seed = get_int(j, ptr, "seed", 1);
  if (seed < 0) bad(ptr + ".seed", "must be >= 0");
  r.seed = static_cast<std::uint64_t>(seed);
  r.elliptic = get_bool(j, ptr, "elliptic", false);
  r.mass = get_num(j, ptr, "mass", 0.25);
  r.t_offset = get_num(j, ptr, "t_offset", 1.0);
  if (j.contains("center")) {
    const json& c = j.at("center");
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() ||
        !c[1].is_number())
      bad(ptr + ".center", "expected [x, y]");
    r.center[0] = c[0].get<double>();
    r.center[1] = c[1].get<double>();
  }
  return r;
}

CylinderSpec parse_cyl(const json& j, const std::string& ptr) {
  if (!j.is_object()) bad(ptr, "expected an object");
  reject_unknown(j, ptr, {"id", "t0", "x0", "R", "alpha_policy", "alpha"});
  CylinderSpec c;
  c.id = get_str(j, ptr, "id", "", true);
  if (c.id.empty()) bad(ptr + ".id", "must be nonempty");
  if (c.id.find_first_of(",/\\ \t") != std::string::npos)
    bad(ptr + ".id", "must not contain separators or spaces");
  c.t0 = get_num(j, ptr, "t0", 0.0, true);
  if (!j.contains("x0")) bad(ptr + ".x0", "missing required array");
  const json& x = j.at("x0");
  if (!x.is_array() || x.empty() || x.size() > 2)
    bad(ptr + ".x0", "expected [x] or [x, y]");
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (!x[a].is_number()) bad(ptr + ".x0", "expected numbers");
    c.x0[a] = x[a].get<double>();
  }
  c.R = get_num(j, ptr, "R", 0.0, true);
  if (!(c.R > 0.0)) bad(ptr + ".R", "radius must be positive");
  c.alpha_policy = get_str(j, ptr, "alpha_policy", "fixed");
  if (c.alpha_policy != "fixed" && c.alpha_policy != "intrinsic")
    bad(ptr + ".alpha_policy", "expected 'fixed' or 'intrinsic'");
  c.alpha = get_num(j, ptr, "alpha", 1.0);
  if (!(c.alpha > 0.0)) bad(ptr + ".alpha", "must be positive");
  return c;
}

const std::set<std::string>& known_checks() {
  static const std::set<std::string> k = {
      "trace",       "levelset",   "main_bound", "dibenedetto",
      "caccioppoli", "stationary", "w21",        "hoelder"};
  return k;
}

std::string canonical_check(const std::string& name) {
  static const std::map<std::string, std::string> alias = {
      {"compute_trace", "trace"},
      {"verify_levelset_lemma", "levelset"},
      {"verify_main_bound", "main_bound"},
      {"dibenedetto_compare", "dibenedetto"},
      {"caccioppoli_check", "caccioppoli"},
      {"stationary_check", "stationary"},
      {"w21_check", "w21"},
      {"hoelder_diagnostic", "hoelder"}};
  auto it = alias.find(name);
  if (it != alias.end()) return it->second;
  return known_checks().count(name) ? name : std::string();
}

CheckSpec parse_check(const json& j, const std::string& ptr) {
  CheckSpec c;
  if (j.is_string()) {
    c.name = canonical_check(j.get<std::string>());
    if (c.name.empty())
      bad(ptr, "unknown check '" + j.get<std::string>() + "'");
    c.options = json::object();
    return c;
  }
  if (!j.is_object()) bad(ptr, "expected a string or an object");
  const std::string raw = get_str(j, ptr, "name", "", true);
  c.name = canonical_check(raw);
  if (c.name.empty()) bad(ptr + ".name", "unknown check '" + raw + "'");
  c.options = j;
  c.options.erase("name");
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"trace", {}},
      {"levelset", {}},
      {"main_bound", {}},
      {"dibenedetto", {"p"}},
      {"caccioppoli", {"weight", "quantiles", "k"}},
      {"stationary", {"k_max", "kappa_cal"}},
      {"w21", {}},
      {"hoelder", {}}};
  for (auto it = c.options.begin(); it != c.options.end(); ++it)
    if (!allowed.at(c.name).count(it.key()))
      bad(ptr + "." + it.key(), "unknown option for check '" + c.name + "'");
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) bad("$", "config must be a JSON object");
  reject_unknown(j, "$",
                 {"phi", "grid", "runs", "cylinders", "checks", "envelopes",
                  "out", "format", "kappa_cal", "k_max", "gamma_mode",
                  "gamma_fixed", "workers"});
  ExperimentConfig cfg;
  if (!j.contains("phi")) bad("$.phi", "missing required object");
  cfg.phi = parse_phi(j.at("phi"), "$.phi");
  if (!j.contains("grid")) bad("$.grid", "missing required object");
  cfg.grid = parse_grid(j.at("grid"), "$.grid");

  if (j.contains("runs")) {
    const json& rs = j.at("runs");
    if (!rs.is_array()) bad("$.runs", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      RunSpec r = parse_run(rs[i], "$.runs[" + std::to_string(i) + "]");
      if (!ids.insert(r.id).second)
        bad("$.runs[" + std::to_string(i) + "].id",
            "duplicate run id '" + r.id + "'");
      cfg.runs.push_back(std::move(r));
    }
  }
  if (j.contains("cylinders")) {
    const json& cs = j.at("cylinders");
    if (!cs.is_array()) bad("$.cylinders", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      CylinderSpec c =
          parse_cyl(cs[i], "$.cylinders[" + std::to_string(i) + "]");
      if (!ids.insert(c.id).second)
        bad("$.cylinders[" + std::to_string(i) + "].id",
            "duplicate cylinder id '" + c.id + "'");
      cfg.cylinders.push_back(std::move(c));
    }
  }
  if (j.contains("checks")) {
    const json& cs = j.at("checks");
    if (!cs.is_array()) bad("$.checks", "expected an array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      CheckSpec c = parse_check(cs[i], "$.checks[" + std::to_string(i) + "]");
      if (!seen.insert(c.name).second)
        bad("$.checks[" + std::to_string(i) + "]",
            "check '" + c.name + "' listed twice");
      cfg.checks.push_back(std::move(c));
    }
  }
  if (j.contains("envelopes")) {
    const json& e = j.at("envelopes");
    if (!e.is_object()) bad("$.envelopes", "expected an object");
    reject_unknown(e, "$.envelopes", {"ratio_max", "beta_max", "c_emp_max"});
    cfg.envelopes.ratio_max = get_num(e, "$.envelopes", "ratio_max", 1e9);
    cfg.envelopes.beta_max = get_num(e, "$.envelopes", "beta_max", 3.2);
    cfg.envelopes.c_emp_max = get_num(e, "$.envelopes", "c_emp_max", 1e9);
  }
  cfg.out_dir = get_str(j, "$", "out", "reports");
  cfg.format = get_str(j, "$", "format", "csv");
  if (cfg.format != "csv" && cfg.format != "json")
    bad("$.format", "expected 'csv' or 'json'");
  cfg.kappa_cal = get_num(j, "$", "kappa_cal", 1.0);
  if (!(cfg.kappa_cal > 0.0)) bad("$.kappa_cal", "must be positive");
  cfg.k_max = static_cast<int>(get_int(j, "$", "k_max", 8));
  if (cfg.k_max < 0 || cfg.k_max > 40) bad("$.k_max", "expected 0..40");
  cfg.gamma_mode = get_str(j, "$", "gamma_mode", "auto");
  if (cfg.gamma_mode != "auto" && cfg.gamma_mode != "fixed")
    bad("$.gamma_mode", "expected 'auto' or 'fixed'");
  cfg.gamma_fixed = get_num(j, "$", "gamma_fixed", 0.0);
  if (cfg.gamma_mode == "fixed" && !(cfg.gamma_fixed > 0.0))
    bad("$.gamma_fixed", "must be positive in fixed mode");
  cfg.workers = static_cast<int>(get_int(j, "$", "workers", 1));
  if (cfg.workers < 1 || cfg.workers > 256)
    bad("$.workers", "expected 1..256");

  // Presets carrying a specific nonlinearity need a plain power growth.
  for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
    const std::string& ps = cfg.runs[i].preset;
    const bool needs_p = ps == "mms_p3" || ps == "barenblatt" ||
                         ps == "radial_pharmonic";
    if (needs_p && cfg.phi.kind != "power")
      bad("$.runs[" + std::to_string(i) + "].preset",
          "preset '" + ps + "' requires phi of kind 'power'");
    if (ps == "mms_p3" && std::abs(cfg.phi.p - 3.0) > 1e-12)
      bad("$.runs[" + std::to_string(i) + "].preset",
          "preset 'mms_p3' requires p = 3");
    if (ps == "barenblatt" && cfg.grid.n != 1)
      bad("$.runs[" + std::to_string(i) + "].preset",
          "preset 'barenblatt' is one-dimensional; set grid.n = 1");
  }
  return cfg;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("$", "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    bad("$", std::string("JSON parse error: ") + e.what());
  }
  return j;
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

const char* code_version() { return PHICALORIC_CODE_VERSION; }

OrliczPtr make_phi(const PhiSpec& s) {
  if (s.kind == "power") return make_power(s.p);
  if (s.kind == "max_power") return make_max_power(s.p, s.q);
  if (s.kind == "min_power") return make_min_power(s.p, s.q);
  return make_shifted(make_power(s.p), s.shift);
}

// ----------------------------------------------------------- trace tools --

double gate_M(const OrliczPtr& phi, int n, double gamma_inf, double alpha) {
  if (!(gamma_inf > 0.0)) return 0.0;
  const double branch1 =
      rho(*phi, n, gamma_inf) * std::pow(alpha, 0.5 * (n - 2));
  const double branch2 = gamma_inf * gamma_inf / alpha;
  return std::min(branch1, branch2);
}

RecursionFit fit_recursion(const DeGiorgiTrace& tr, const OrliczPtr& phi,
                           int n) {
  RecursionFit fit;
  fit.b = std::exp2(3.0 * (1.0 + 2.0 / n));
  fit.alpha = 2.0 / n;
  fit.M = gate_M(phi, n, tr.gamma_inf, tr.alpha);
  if (!(fit.M > 0.0)) return fit;
  for (std::size_t k = 0; k + 1 < tr.W.size(); ++k) {
    if (!(tr.W[k] > 0.0) || !(tr.W[k + 1] > 0.0)) continue;
    const double denom = std::exp2(3.0 * k * (1.0 + 2.0 / n)) * tr.W[k] *
                         std::pow(tr.W[k] / fit.M, 2.0 / n);
    fit.C = std::max(fit.C, tr.W[k + 1] / denom);
    ++fit.rungs;
  }
  return fit;
}

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
          all.push_back(fr.v[static_cast<std::size_t>(cell_index(g, cx, cy))]);
      }
    }
  }
  if (all.empty())
    throw OutOfDomain("quantile_v_inner: no cells inside the cylinder");
  std::sort(all.begin(), all.end());
  q = std::clamp(q, 0.0, 1.0);
  return all[static_cast<std::size_t>(q * (all.size() - 1))];
}

// -------------------------------------------------------------- catalogs --

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {
      "trace",       "levelset",   "main_bound", "dibenedetto",
      "caccioppoli", "stationary", "w21",        "hoelder"};
  return names;
}

std::string describe_check(const std::string& name) {
  const std::string canon = canonical_check(name);
  static const std::map<std::string, std::string> doc = {
      {"trace",
       "trace: level-set truncation cascade.  Levels gamma_k = gamma_inf"
       " (1 - 2^-k) climb toward the top level; Y_k, Z_k, W_k are the"
       " weighted masses of phi(v) and v^2/alpha above gamma_k over the"
       " shrinking cylinders Q_k.  Asserts the masses are finite and"
       " nonincreasing in k.  Also fits the smallest constant C with"
       " W_{k+1} <= C 2^{3k(1+2/n)} W_k (W_k/M)^{2/n} against the gate"
       " M = min{rho(gamma_inf) alpha^{(n-2)/2}, gamma_inf^2/alpha} and"
       " reports the induced recursion majorant after 60 rungs."},
      {"levelset",
       "levelset: one-rung estimate of the truncation cascade.  For each"
       " transition k -> k+1 it measures the sup-in-time L1 mass of the"
       " truncated v^2/alpha and the L1-in-time Lr mass of the truncated"
       " phi(v) on Q_{k+1}, divides by 2^{3k} W_k, and fits the growth"
       " exponent beta of the raw constants against k.  Asserts beta stays"
       " under the configured envelope (the cascade must not outgrow the"
       " 2^{3k} budget)."},
      {"main_bound",
       "main_bound: sup bound on the inner cylinder.  Compares lhs ="
       " min{alpha^{(n-2)/2} sup_{Q_R} rho(v), sup_{Q_R} v^2/alpha} against"
       " rhs = avg_{Q_2R} (v^2/alpha + phi(v)) and reports the ratio, the"
       " empirical stand-in for the a-priori constant.  Asserts the ratio"
       " is finite and under the envelope."},
      {"dibenedetto",
       "dibenedetto: power-growth comparison at one amplitude.  The"
       " intrinsic estimate keeps rhs_new = avg (v^2/alpha + v^p); the"
       " classical power-law bound pads it to rhs_dib = max{rhs_new,"
       " alpha^{p/(2-p)}}, which cannot vanish with the data.  Rows record"
       " lhs, rhs_new, rhs_dib and the run amplitude so sweeps show"
       " rhs_new following the data to zero while rhs_dib plateaus."
       "  p = 2 is skipped (the pad exponent is undefined)."},
      {"caccioppoli",
       "caccioppoli: discrete energy estimate with a smooth cutoff.  For a"
       " weight f(v) (constant 1, a level indicator, or a custom bounded"
       " nondecreasing function) it compares the sup-in-time potential mass"
       " and the weighted gradient energy on Q_R against the cutoff"
       " penalties on Q_2R, reporting c_emp = lhs/rhs.  Indicator levels"
       " are taken from quantiles of v over the inner cylinder.  Asserts"
       " c_emp is finite and under the envelope."},
      {"stationary",
       "stationary: elliptic sup bound and truncation cascade on the final"
       " snapshot.  Compares sup_{B_R} phi(v) with avg_{B_2R} phi(v), then"
       " iterates U_k = avg (sqrt(phi'(v) v) - c_k)_+^2 eta_k^q with"
       " c_k = c_inf (1 + 2^-k) and shrinking ball cutoffs, where c_inf"
       " solves the calibration c_inf^2 = kappa_cal U_0(c_inf).  Reports"
       " the U_k cascade and the matching truncation levels."},
      {"w21",
       "w21: second-derivative mass on a spatial slice.  On the snapshot"
       " nearest the cylinder end time it compares the L1 mass of the"
       " discrete Hessian and of the divergence of the nonlinear flux"
       " A(grad u) against the gradient energy |grad V|^2 + phi(v) plus a"
       " conjugate-function constant.  Asserts both ratios are finite and"
       " under the envelope."},
      {"hoelder",
       "hoelder: oscillation-decay diagnostic.  Fits mu in osc_{Q_r}"
       " grad u ~ C (r/R kappa)^mu by log-log regression over four nested"
       " radii, with kappa the curvature scale at the local sup of v."
       "  Purely diagnostic: oscillations at the rounding floor are"
       " reported unresolved, and no envelope is enforced."}};
  auto it = doc.find(canon);
  return it == doc.end() ? std::string() : it->second;
}

// ------------------------------------------------------------ solve layer --

namespace {

struct RunData {
  bool ok = false;
  bool from_cache = false;
  GradOrField field;
  std::string error;  // nonconvergence / blowup message
};

GridSpec grid_for_run(const ExperimentConfig& cfg, const RunSpec& run) {
  GridSpec g = cfg.grid;
  if (run.elliptic) {
    g.dt = 1.0;  // pseudo-time unit for the stationary continuation
    g.T = 0.0;
  }
  PresetParams prm;
  prm.amplitude = run.amplitude;
  prm.seed = run.seed;
  prm.p = cfg.phi.p;
  prm.mass = run.mass;
  prm.t_offset = run.t_offset;
  prm.center[0] = run.center[0];
  prm.center[1] = run.center[1];
  Preset ps = make_preset(run.preset, prm, g);
  g.u0 = ps.u0;
  g.bc = ps.bc;
  g.forcing = ps.forcing;
  return g;
}

json run_key_json(const ExperimentConfig& cfg, const RunSpec& run) {
  json j;
  j["phi"] = {{"kind", cfg.phi.kind},
              {"p", cfg.phi.p},
              {"q", cfg.phi.q},
              {"shift", cfg.phi.shift}};
  j["grid"] = {{"n", cfg.grid.n},
               {"N", cfg.grid.N},
               {"cells", {cfg.grid.cells[0], cfg.grid.cells[1]}},
               {"extent", {cfg.grid.extent[0], cfg.grid.extent[1]}},
               {"dt", cfg.grid.dt},
               {"T", cfg.grid.T},
               {"snapshot_every", cfg.grid.snapshot_every}};
  j["run"] = {{"preset", run.preset},
              {"amplitude", run.amplitude},
              {"seed", run.seed},
              {"elliptic", run.elliptic},
              {"mass", run.mass},
              {"t_offset", run.t_offset},
              {"center", {run.center[0], run.center[1]}}};
  return j;
}

constexpr char kCacheMagic[8] = {'P', 'H', 'S', 'N', 'A', 'P', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool take(std::ifstream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof *v);
  return static_cast<bool>(in);
}

void put_vec(std::ofstream& out, const std::vector<double>& v) {
  const std::uint64_t n = v.size();
  put(out, n);
  if (n) out.write(reinterpret_cast<const char*>(v.data()), n * sizeof(double));
}

bool take_vec(std::ifstream& in, std::vector<double>* v) {
  std::uint64_t n = 0;
  if (!take(in, &n)) return false;
  if (n > (1ull << 32)) return false;
  v->resize(n);
  if (n) in.read(reinterpret_cast<char*>(v->data()), n * sizeof(double));
  return static_cast<bool>(in);
}

void save_cache(const fs::path& path, const GradOrField& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return;  // cache is best effort
  out.write(kCacheMagic, sizeof kCacheMagic);
  put(out, static_cast<std::int32_t>(f.grid.n));
  put(out, static_cast<std::int32_t>(f.grid.N));
  put(out, static_cast<std::int32_t>(f.grid.cells[0]));
  put(out, static_cast<std::int32_t>(f.grid.cells[1]));
  put(out, f.grid.extent[0]);
  put(out, f.grid.extent[1]);
  put(out, f.grid.dt);
  put(out, f.grid.T);
  put(out, static_cast<std::int32_t>(f.grid.snapshot_every));
  put(out, static_cast<std::int64_t>(f.stats.newton_iters));
  put(out, static_cast<std::int64_t>(f.stats.cg_iters));
  put(out, static_cast<std::int64_t>(f.stats.picard_fallbacks));
  put(out, static_cast<std::int64_t>(f.stats.eps_ladders));
  put(out, f.stats.final_eps);
  put(out, static_cast<std::int32_t>(f.stats.max_newton_per_step));
  put_vec(out, f.stats.energy_trace);
  put(out, static_cast<std::uint64_t>(f.snaps.size()));
  for (const auto& s : f.snaps) {
    put(out, s.t);
    put_vec(out, s.u);
  }
}

bool load_cache(const fs::path& path, const GridSpec& g, const OrliczPtr& phi,
                GradOrField* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) return false;
  std::int32_t n, N, c0, c1, sev, maxnewton;
  std::int64_t ni, ci, pf, el;
  double e0, e1, dt, T, feps;
  if (!take(in, &n) || !take(in, &N) || !take(in, &c0) || !take(in, &c1) ||
      !take(in, &e0) || !take(in, &e1) || !take(in, &dt) || !take(in, &T) ||
      !take(in, &sev))
    return false;
  if (n != g.n || N != g.N || c0 != g.cells[0] || c1 != g.cells[1] ||
      e0 != g.extent[0] || e1 != g.extent[1] || dt != g.dt || T != g.T ||
      sev != g.snapshot_every)
    return false;
  SolveStats stats;
  std::vector<double> energy;
  if (!take(in, &ni) || !take(in, &ci) || !take(in, &pf) || !take(in, &el) ||
      !take(in, &feps) || !take(in, &maxnewton) || !take_vec(in, &energy))
    return false;
  stats.newton_iters = ni;
  stats.cg_iters = ci;
  stats.picard_fallbacks = pf;
  stats.eps_ladders = el;
  stats.final_eps = feps;
  stats.max_newton_per_step = maxnewton;
  stats.energy_trace = std::move(energy);
  std::uint64_t count = 0;
  if (!take(in, &count) || count > (1ull << 24)) return false;
  std::vector<Snapshot> snaps(count);
  for (auto& s : snaps) {
    if (!take(in, &s.t) || !take_vec(in, &s.u)) return false;
  }
  *out = discrete_fields(phi, g, std::move(snaps));
  out->stats = std::move(stats);
  return true;
}

RunData execute_run(const ExperimentConfig& cfg, const RunSpec& run,
                    const OrliczPtr& phi, const fs::path& cache_dir) {
  RunData rd;
  GridSpec g = grid_for_run(cfg, run);
  const std::string key = config_hash(run_key_json(cfg, run));
  const fs::path cache =
      cache_dir / (run.id + "_" + key + "_" + code_version() + ".snap");
  if (load_cache(cache, g, phi, &rd.field)) {
    rd.ok = true;
    rd.from_cache = true;
    return rd;
  }
  try {
    rd.field = run.elliptic ? solve_elliptic(phi, g) : solve_parabolic(phi, g);
    rd.ok = true;
    save_cache(cache, rd.field);
  } catch (const NonConvergence& e) {
    rd.error = e.what();
  } catch (const NumericalBlowup& e) {
    rd.error = e.what();
  }
  return rd;
}

// ------------------------------------------------------------ check layer --

struct TaskOut {
  std::vector<ReportRow> rows;
  double max_ratio = 0.0;
  bool pass = true;
  std::vector<std::string> failures;
  std::string config_fault;  // nonempty aborts the experiment with exit 2
};

struct TaskCtx {
  const ExperimentConfig* cfg = nullptr;
  const OrliczPtr* phi = nullptr;
  const GradOrField* field = nullptr;
  std::string run_id;
  double amplitude = 1.0;
  bool elliptic = false;
  std::string cyl_id;
  std::string cyl_ptr;  // pointer path for runtime domain faults
  ParabolicCylinder cyl;
};

void push(TaskOut* out, const TaskCtx& c, int k, const std::string& quantity,
          double value) {
  out->rows.push_back({c.run_id, c.cyl_id, k, quantity, value});
}

void require_finite(TaskOut* out, const TaskCtx& c, const char* what,
                    double v) {
  if (!std::isfinite(v)) {
    out->pass = false;
    out->failures.push_back(c.run_id + "/" + c.cyl_id + ": " + what +
                            " is not finite");
  }
}

double resolve_gamma(const TaskCtx& c) {
  if (c.cfg->gamma_mode == "fixed") return c.cfg->gamma_fixed;
  return choose_gamma_infty(*c.field, c.cyl, *c.phi, c.cfg->kappa_cal);
}

void check_trace(const CheckSpec&, const TaskCtx& c, TaskOut* out) {
  const double gamma_inf = resolve_gamma(c);
  push(out, c, -1, "gamma_inf", gamma_inf);
  if (!(gamma_inf > 0.0)) return;  // vacuous data
  const DeGiorgiTrace tr =
      compute_trace(*c.field, c.cyl, *c.phi, gamma_inf, c.cfg->k_max);
  push(out, c, -1, "stop_k", tr.stop_k);
  for (std::size_t k = 0; k < tr.W.size(); ++k) {
    push(out, c, static_cast<int>(k), "gamma", tr.gamma[k]);
    push(out, c, static_cast<int>(k), "Y", tr.Y[k]);
    push(out, c, static_cast<int>(k), "Z", tr.Z[k]);
    push(out, c, static_cast<int>(k), "W", tr.W[k]);
    require_finite(out, c, "W", tr.W[k]);
    if (k > 0 && tr.W[k] > tr.W[k - 1] * (1.0 + 1e-12)) {
      out->pass = false;
      out->failures.push_back(c.run_id + "/" + c.cyl_id +
                              ": W increased along the cascade");
    }
  }
  const RecursionFit fit = fit_recursion(tr, *c.phi, c.field->grid.n);
  push(out, c, -1, "gate_M", fit.M);
  push(out, c, -1, "c_fit", fit.C);
  push(out, c, -1, "fit_rungs", fit.rungs);
  out->max_ratio = std::max(out->max_ratio, fit.C);
  if (fit.C > 0.0 && tr.W[0] > 0.0 && fit.M > 0.0) {
    RecursionParams prm;
    prm.a0 = tr.W[0];
    prm.C = fit.C;
    prm.b = fit.b;
    prm.alpha = fit.alpha;
    prm.gamma = fit.M;
    const std::vector<double> orbit = iterate_bound(prm, 60);
    push(out, c, -1, "majorant_final_over_a0", orbit.back() / tr.W[0]);
  }
}

void check_levelset(const CheckSpec&, const TaskCtx& c, TaskOut* out) {
  const double gamma_inf = resolve_gamma(c);
  if (!(gamma_inf > 0.0)) {
    push(out, c, -1, "all_vacuous", 1.0);
    return;
  }
  const DeGiorgiTrace tr =
      compute_trace(*c.field, c.cyl, *c.phi, gamma_inf, c.cfg->k_max);
  const LevelsetReport rep = verify_levelset_lemma(tr, *c.field, c.cyl, *c.phi);
  for (const auto& row : rep.rows) {
    push(out, c, row.k, "lhs1", row.lhs1);
    push(out, c, row.k, "lhs2", row.lhs2);
    push(out, c, row.k, "c1", row.c1);
    push(out, c, row.k, "c2", row.c2);
    push(out, c, row.k, "ck_raw", row.ck_raw);
    push(out, c, row.k, "vacuous", row.vacuous ? 1.0 : 0.0);
  }
  push(out, c, -1, "max_c", rep.max_c);
  push(out, c, -1, "beta_fit", rep.beta_fit);
  push(out, c, -1, "all_vacuous", rep.all_vacuous ? 1.0 : 0.0);
  if (rep.all_vacuous) return;
  out->max_ratio = std::max(out->max_ratio, rep.max_c);
  require_finite(out, c, "max_c", rep.max_c);
  require_finite(out, c, "beta_fit", rep.beta_fit);
  if (rep.beta_fit > c.cfg->envelopes.beta_max) {
    out->pass = false;
    out->failures.push_back(
        c.run_id + "/" + c.cyl_id + ": levelset growth exponent " +
        std::to_string(rep.beta_fit) + " exceeds the envelope");
  }
}

void check_main_bound(const CheckSpec&, const TaskCtx& c, TaskOut* out) {
  const MainBoundReport rep = verify_main_bound(*c.field, c.cyl, *c.phi);
  push(out, c, -1, "lhs", rep.lhs);
  push(out, c, -1, "rhs", rep.rhs);
  push(out, c, -1, "ratio", rep.ratio);
  out->max_ratio = std::max(out->max_ratio, rep.ratio);
  require_finite(out, c, "ratio", rep.ratio);
  if (rep.ratio > c.cfg->envelopes.ratio_max) {
    out->pass = false;
    out->failures.push_back(c.run_id + "/" + c.cyl_id +
                            ": sup-bound ratio exceeds the envelope");
  }
}

void check_dibenedetto(const CheckSpec& spec, const TaskCtx& c, TaskOut* out) {
  double p = c.cfg->phi.p;
  if (spec.options.contains("p")) p = spec.options.at("p").get<double>();
  const DibCompareRow row =
      dibenedetto_compare(*c.field, c.cyl, p, c.amplitude);
  push(out, c, -1, "amplitude", row.amplitude);
  push(out, c, -1, "skipped", row.skipped ? 1.0 : 0.0);
  if (row.skipped) return;
  push(out, c, -1, "lhs", row.lhs);
  push(out, c, -1, "rhs_new", row.rhs_new);
  push(out, c, -1, "rhs_dib", row.rhs_dib);
  require_finite(out, c, "lhs", row.lhs);
  require_finite(out, c, "rhs_new", row.rhs_new);
  require_finite(out, c, "rhs_dib", row.rhs_dib);
  if (row.rhs_new > 0.0)
    out->max_ratio = std::max(out->max_ratio, row.lhs / row.rhs_new);
}

void check_caccioppoli(const CheckSpec& spec, const TaskCtx& c, TaskOut* out) {
  std::string weight = "constant";
  if (spec.options.contains("weight"))
    weight = spec.options.at("weight").get<std::string>();
  int kk = 1;
  if (spec.options.contains("k")) kk = spec.options.at("k").get<int>();
  std::vector<double> quantiles = {0.5};
  if (spec.options.contains("quantiles"))
    quantiles = spec.options.at("quantiles").get<std::vector<double>>();

  const CutoffFamily cutoffs(c.cyl, *c.phi, std::max(kk + 1, 2));
  auto run_one = [&](const FChoice& fc, int idx) {
    const CaccioppoliReport rep =
        caccioppoli_check(*c.field, c.cyl, *c.phi, fc, cutoffs, kk);
    push(out, c, idx, "gamma", fc.gamma);
    push(out, c, idx, "lhs_sup", rep.lhs_sup);
    push(out, c, idx, "lhs_gradv", rep.lhs_gradv);
    push(out, c, idx, "rhs1", rep.rhs1);
    push(out, c, idx, "rhs2", rep.rhs2);
    push(out, c, idx, "c_emp", rep.c_emp);
    push(out, c, idx, "vacuous", rep.vacuous ? 1.0 : 0.0);
    if (rep.has_truncated) {
      push(out, c, idx, "cor_c_emp", rep.cor_c_emp);
      push(out, c, idx, "cor_vacuous", rep.cor_vacuous ? 1.0 : 0.0);
    }
    if (rep.vacuous) return;
    out->max_ratio = std::max(out->max_ratio, rep.c_emp);
    require_finite(out, c, "c_emp", rep.c_emp);
    if (rep.c_emp > c.cfg->envelopes.c_emp_max) {
      out->pass = false;
      out->failures.push_back(c.run_id + "/" + c.cyl_id +
                              ": energy constant exceeds the envelope");
    }
  };

  if (weight == "constant") {
    FChoice fc;
    fc.kind = FChoice::Constant;
    run_one(fc, 0);
  } else if (weight == "unit") {
    FChoice fc;
    fc.kind = FChoice::Custom;
    fc.fn = [](double) { return 1.0; };
    run_one(fc, 0);
  } else if (weight == "indicator") {
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
      FChoice fc;
      fc.kind = FChoice::Indicator;
      fc.gamma = quantile_v_inner(*c.field, c.cyl, quantiles[i]);
      run_one(fc, static_cast<int>(i));
    }
  } else {
    out->config_fault =
        "$.checks: caccioppoli weight must be constant | indicator | unit";
  }
}

void check_stationary(const CheckSpec& spec, const TaskCtx& c, TaskOut* out) {
  int k_max = 12;
  double kappa = c.cfg->kappa_cal;
  if (spec.options.contains("k_max"))
    k_max = spec.options.at("k_max").get<int>();
  if (spec.options.contains("kappa_cal"))
    kappa = spec.options.at("kappa_cal").get<double>();
  Ball ball;
  ball.x0[0] = c.cyl.x0[0];
  ball.x0[1] = c.cyl.x0[1];
  ball.R = c.cyl.R;
  const StationaryReport rep =
      stationary_check(*c.field, ball, *c.phi, k_max, kappa);
  push(out, c, -1, "lhs", rep.lhs);
  push(out, c, -1, "rhs", rep.rhs);
  push(out, c, -1, "ratio", rep.ratio);
  push(out, c, -1, "c_inf", rep.c_inf);
  push(out, c, -1, "vacuous", rep.vacuous ? 1.0 : 0.0);
  for (std::size_t k = 0; k < rep.U.size(); ++k) {
    push(out, c, static_cast<int>(k), "U", rep.U[k]);
    push(out, c, static_cast<int>(k), "gamma_level", rep.gamma_levels[k]);
  }
  if (rep.vacuous) return;
  out->max_ratio = std::max(out->max_ratio, rep.ratio);
  require_finite(out, c, "ratio", rep.ratio);
  if (rep.ratio > c.cfg->envelopes.ratio_max) {
    out->pass = false;
    out->failures.push_back(c.run_id + "/" + c.cyl_id +
                            ": stationary ratio exceeds the envelope");
  }
}

void check_w21(const CheckSpec&, const TaskCtx& c, TaskOut* out) {
  const W21Report rep = w21_check(*c.field, c.cyl, *c.phi);
  push(out, c, -1, "lhs1", rep.lhs1);
  push(out, c, -1, "lhs2", rep.lhs2);
  push(out, c, -1, "rhs", rep.rhs);
  push(out, c, -1, "rhs_flux", rep.rhs_flux);
  push(out, c, -1, "ratio1", rep.ratio1);
  push(out, c, -1, "ratio2", rep.ratio2);
  out->max_ratio = std::max(out->max_ratio, std::max(rep.ratio1, rep.ratio2));
  require_finite(out, c, "ratio1", rep.ratio1);
  require_finite(out, c, "ratio2", rep.ratio2);
  if (std::max(rep.ratio1, rep.ratio2) > c.cfg->envelopes.ratio_max) {
    out->pass = false;
    out->failures.push_back(c.run_id + "/" + c.cyl_id +
                            ": second-difference ratio exceeds the envelope");
  }
}

void check_hoelder(const CheckSpec&, const TaskCtx& c, TaskOut* out) {
  const HoelderReport rep = hoelder_diagnostic(*c.field, c.cyl, *c.phi);
  push(out, c, -1, "unresolved", rep.unresolved ? 1.0 : 0.0);
  if (!rep.unresolved) {
    push(out, c, -1, "mu_fit", rep.mu_fit);
    push(out, c, -1, "kappa_at_sup", rep.kappa_at_sup);
    out->max_ratio = std::max(out->max_ratio, rep.mu_fit);
  }
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    push(out, c, static_cast<int>(i), "radius", rep.radii[i]);
    push(out, c, static_cast<int>(i), "osc", rep.oscs[i]);
  }
}

using CheckFn = void (*)(const CheckSpec&, const TaskCtx&, TaskOut*);

CheckFn check_fn(const std::string& name) {
  static const std::map<std::string, CheckFn> fns = {
      {"trace", check_trace},           {"levelset", check_levelset},
      {"main_bound", check_main_bound}, {"dibenedetto", check_dibenedetto},
      {"caccioppoli", check_caccioppoli}, {"stationary", check_stationary},
      {"w21", check_w21},               {"hoelder", check_hoelder}};
  return fns.at(name);
}

// Cylinder with the alpha policy applied.  Intrinsic alpha balances the two
// branches of the sup bound: alpha = (vbar^2 / rho(vbar))^{2/n} with vbar
// the sup of v over B_2R on the snapshot nearest t0.
ParabolicCylinder resolve_cylinder(const CylinderSpec& cs,
                                   const GradOrField& f, const OrliczPtr& phi,
                                   const std::string& ptr) {
  ParabolicCylinder cyl;
  cyl.t0 = cs.t0;
  cyl.x0[0] = cs.x0[0];
  cyl.x0[1] = cs.x0[1];
  cyl.R = cs.R;
  cyl.alpha = cs.alpha;
  if (cs.alpha_policy == "intrinsic") {
    const GridSpec& g = f.grid;
    std::size_t best = 0;
    for (std::size_t i = 1; i < f.frames.size(); ++i)
      if (std::abs(f.frames[i].t - cs.t0) <
          std::abs(f.frames[best].t - cs.t0))
        best = i;
    const FieldFrame& fr = f.frames[best];
    double vbar = 0.0;
    const int ncy = g.n == 2 ? g.cells[1] : 1;
    for (int cx = 0; cx < g.cells[0]; ++cx) {
      for (int cy = 0; cy < ncy; ++cy) {
        double c[2];
        cell_center(g, cx, cy, c);
        double rr = 0.0;
        for (int d = 0; d < g.n; ++d)
          rr += (c[d] - cs.x0[d]) * (c[d] - cs.x0[d]);
        if (rr <= 4.0 * cs.R * cs.R)
          vbar = std::max(vbar,
                          fr.v[static_cast<std::size_t>(cell_index(g, cx, cy))]);
      }
    }
    const double r = vbar > 0.0 ? rho(*phi, g.n, vbar) : 0.0;
    if (vbar > 0.0 && r > 0.0)
      cyl.alpha = std::pow(vbar * vbar / r, 2.0 / g.n);
    if (!(cyl.alpha > 0.0) || !std::isfinite(cyl.alpha))
      throw ConfigError(ptr, "intrinsic alpha degenerated; supply a fixed one");
  }
  return cyl;
}

// ---------------------------------------------------------------- reports --

std::string fmt_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows_csv(const fs::path& path, const std::vector<ReportRow>& rows,
                    const std::string& hash) {
  std::ofstream out(path, std::ios::trunc);
  out << "# config_hash=" << hash << " version=" << code_version() << "\n";
  out << "run_id,cyl_id,k,quantity,value\n";
  for (const auto& r : rows)
    out << r.run_id << ',' << r.cyl_id << ',' << r.k << ',' << r.quantity
        << ',' << fmt_value(r.value) << '\n';
}

void write_rows_json(const fs::path& path, const std::vector<ReportRow>& rows,
                     const std::string& hash) {
  json j;
  j["config_hash"] = hash;
  j["version"] = code_version();
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"run_id", r.run_id},
                         {"cyl_id", r.cyl_id},
                         {"k", r.k},
                         {"quantity", r.quantity},
                         {"value", r.value}});
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

void write_plot(const fs::path& path, const std::string& hash,
                const std::vector<std::pair<double, double>>& pts) {
  std::ofstream out(path, std::ios::trunc);
  out << "# config_hash=" << hash << " version=" << code_version() << "\n";
  for (const auto& [a, b] : pts)
    out << fmt_value(a) << ' ' << fmt_value(b) << '\n';
}

}  // namespace

// ----------------------------------------------------------------- driver --

ExperimentResult run_experiment(const ExperimentConfig& cfg_in,
                                const json& raw, const RunnerOptions& opt) {
  ExperimentConfig cfg = cfg_in;
  if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
  if (opt.workers_override > 0) cfg.workers = opt.workers_override;
  if (!opt.format_override.empty()) cfg.format = opt.format_override;
  if (opt.has_seed_override)
    for (std::size_t i = 0; i < cfg.runs.size(); ++i)
      cfg.runs[i].seed = opt.seed_override + i;

  ExperimentResult res;
  res.hash = config_hash(raw);

  const fs::path out_dir(cfg.out_dir);
  const fs::path cache_dir = out_dir / "cache";
  fs::create_directories(cache_dir);

  const OrliczPtr phi = make_phi(cfg.phi);

  // Solve phase: worker pool over runs, deterministic slot placement.
  std::vector<RunData> data(cfg.runs.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cfg.runs.size()) return;
        data[i] = execute_run(cfg, cfg.runs[i], phi, cache_dir);
      }
    };
    const int nw = std::min<int>(cfg.workers,
                                 std::max<std::size_t>(cfg.runs.size(), 1));
    std::vector<std::thread> pool;
    for (int w = 1; w < nw; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  std::vector<ReportRow> stat_rows;
  for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
    const RunSpec& run = cfg.runs[i];
    if (!data[i].ok) {
      res.nonconverged.push_back(run.id);
      res.failures.push_back(run.id + ": " + data[i].error);
      continue;
    }
    const SolveStats& st = data[i].field.stats;
    auto srow = [&](const char* q, double v) {
      stat_rows.push_back({run.id, "", -1, q, v});
    };
    srow("newton_iters", static_cast<double>(st.newton_iters));
    srow("cg_iters", static_cast<double>(st.cg_iters));
    srow("picard_fallbacks", static_cast<double>(st.picard_fallbacks));
    srow("eps_ladders", static_cast<double>(st.eps_ladders));
    srow("final_eps", st.final_eps);
    srow("max_newton_per_step", st.max_newton_per_step);
    srow("frames", static_cast<double>(data[i].field.snaps.size()));
    srow("final_energy",
         st.energy_trace.empty() ? 0.0 : st.energy_trace.back());
  }
  write_rows_csv(out_dir / "solve_stats.csv", stat_rows, res.hash);

  if (opt.mode == Mode::Solve || cfg.checks.empty() || cfg.runs.empty()) {
    json summary;
    summary["config_hash"] = res.hash;
    summary["version"] = code_version();
    summary["checks"] = json::array();
    summary["nonconverged"] = res.nonconverged;
    summary["pass"] = res.nonconverged.empty();
    std::ofstream out(out_dir / "summary.json", std::ios::trunc);
    out << summary.dump(2) << '\n';
    res.exit_code = res.nonconverged.empty() ? 0 : 3;
    return res;
  }

  // Check phase: tasks in report order (check-major), pool over tasks.
  struct Task {
    std::size_t check_idx, run_idx, cyl_idx;
  };
  std::vector<Task> tasks;
  std::string fault;  // first config-level fault from cylinder resolution
  std::vector<std::vector<std::optional<ParabolicCylinder>>> cyls(
      cfg.runs.size());
  for (std::size_t r = 0; r < cfg.runs.size(); ++r) {
    cyls[r].resize(cfg.cylinders.size());
    if (!data[r].ok) continue;
    for (std::size_t cl = 0; cl < cfg.cylinders.size(); ++cl) {
      const std::string ptr = "$.cylinders[" + std::to_string(cl) + "]";
      try {
        ParabolicCylinder cyl =
            resolve_cylinder(cfg.cylinders[cl], data[r].field, phi, ptr);
        if (!cfg.runs[r].elliptic) {
          const auto& snaps = data[r].field.snaps;
          check_cylinder(cyl, data[r].field.grid, snaps.front().t,
                         snaps.back().t);
        }
        cyls[r][cl] = cyl;
      } catch (const Error& e) {
        if (fault.empty())
          fault = ptr + " with run '" + cfg.runs[r].id + "': " + e.what();
      }
    }
  }
  if (!fault.empty()) {
    res.failures.push_back(fault);
    res.exit_code = 2;
    return res;
  }

  for (std::size_t ck = 0; ck < cfg.checks.size(); ++ck)
    for (std::size_t r = 0; r < cfg.runs.size(); ++r) {
      if (!data[r].ok) continue;
      const bool stationary_only = cfg.runs[r].elliptic;
      if (stationary_only && cfg.checks[ck].name != "stationary") continue;
      for (std::size_t cl = 0; cl < cfg.cylinders.size(); ++cl)
        tasks.push_back({ck, r, cl});
    }

  std::vector<TaskOut> outs(tasks.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        const Task& t = tasks[i];
        TaskCtx ctx;
        ctx.cfg = &cfg;
        ctx.phi = &phi;
        ctx.field = &data[t.run_idx].field;
        ctx.run_id = cfg.runs[t.run_idx].id;
        ctx.amplitude = cfg.runs[t.run_idx].amplitude;
        ctx.elliptic = cfg.runs[t.run_idx].elliptic;
        ctx.cyl_id = cfg.cylinders[t.cyl_idx].id;
        ctx.cyl_ptr = "$.cylinders[" + std::to_string(t.cyl_idx) + "]";
        ctx.cyl = *cyls[t.run_idx][t.cyl_idx];
        try {
          check_fn(cfg.checks[t.check_idx].name)(cfg.checks[t.check_idx], ctx,
                                                 &outs[i]);
        } catch (const Error& e) {
          outs[i].config_fault = ctx.cyl_ptr + " with run '" + ctx.run_id +
                                 "': " + e.what();
        }
      }
    };
    const int nw =
        std::min<int>(cfg.workers, std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::thread> pool;
    for (int w = 1; w < nw; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  // Ordered merge: rows grouped per check, then run, cylinder, rung.
  std::map<std::string, std::vector<ReportRow>> rows_by_check;
  std::map<std::string, CheckSummary> summary_by_check;
  for (const auto& spec : cfg.checks) {
    rows_by_check[spec.name];
    auto& s = summary_by_check[spec.name];
    s.check = spec.name;
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string& name = cfg.checks[tasks[i].check_idx].name;
    if (!outs[i].config_fault.empty()) {
      res.failures.push_back(outs[i].config_fault);
      res.exit_code = 2;
      return res;
    }
    auto& rows = rows_by_check[name];
    rows.insert(rows.end(), outs[i].rows.begin(), outs[i].rows.end());
    auto& s = summary_by_check[name];
    s.max_ratio = std::max(s.max_ratio, outs[i].max_ratio);
    s.pass = s.pass && outs[i].pass;
    for (const auto& f : outs[i].failures)
      res.failures.push_back(name + ": " + f);
  }

  for (const auto& spec : cfg.checks) {
    const fs::path base = out_dir / spec.name;
    if (cfg.format == "csv")
      write_rows_csv(base.string() + ".csv", rows_by_check[spec.name],
                     res.hash);
    else
      write_rows_json(base.string() + ".json", rows_by_check[spec.name],
                      res.hash);
  }

  if (opt.mode == Mode::Suite) {
    const fs::path plots = out_dir / "plots";
    fs::create_directories(plots);
    if (rows_by_check.count("trace")) {
      // One decay curve per (run, cylinder): rung index against log10 W.
      std::map<std::pair<std::string, std::string>,
               std::vector<std::pair<double, double>>>
          curves;
      for (const auto& r : rows_by_check["trace"])
        if (r.quantity == "W" && r.value > 0.0)
          curves[{r.run_id, r.cyl_id}].push_back(
              {static_cast<double>(r.k), std::log10(r.value)});
      for (const auto& [key, pts] : curves)
        write_plot(plots / ("trace_" + key.first + "_" + key.second + ".dat"),
                   res.hash, pts);
    }
    if (rows_by_check.count("dibenedetto")) {
      // Amplitude sweeps: one series per reported quantity.
      for (const char* q : {"lhs", "rhs_new", "rhs_dib"}) {
        std::vector<std::pair<double, double>> pts;
        std::map<std::pair<std::string, std::string>, double> amp;
        for (const auto& r : rows_by_check["dibenedetto"])
          if (r.quantity == "amplitude") amp[{r.run_id, r.cyl_id}] = r.value;
        for (const auto& r : rows_by_check["dibenedetto"])
          if (r.quantity == q) pts.push_back({amp[{r.run_id, r.cyl_id}], r.value});
        std::stable_sort(pts.begin(), pts.end(),
                         [](const auto& a, const auto& b) {
                           return a.first < b.first;
                         });
        write_plot(plots / (std::string("amplitude_") + q + ".dat"), res.hash,
                   pts);
      }
    }
  }

  json summary;
  summary["config_hash"] = res.hash;
  summary["version"] = code_version();
  summary["checks"] = json::array();
  bool all_pass = true;
  for (const auto& spec : cfg.checks) {
    // A check may be listed once; map iteration order is config order here
    // because names are unique per config.
    const CheckSummary& s = summary_by_check[spec.name];
    summary["checks"].push_back(
        {{"check", s.check}, {"max_ratio", s.max_ratio}, {"pass", s.pass}});
    res.summaries.push_back(s);
    all_pass = all_pass && s.pass;
  }
  summary["nonconverged"] = res.nonconverged;
  summary["pass"] = all_pass && res.nonconverged.empty();
  {
    std::ofstream out(out_dir / "summary.json", std::ios::trunc);
    out << summary.dump(2) << '\n';
  }

  if (!res.nonconverged.empty())
    res.exit_code = 3;
  else if (!all_pass)
    res.exit_code = 1;
  else
    res.exit_code = 0;
  return res;
}

}  // namespace phicaloric::runner
