#pragma once

#include <phicaloric/fields.hpp>
#include <phicaloric/grid.hpp>
#include <phicaloric/harness.hpp>
#include <phicaloric/orlicz.hpp>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

// Experiment orchestration: declarative JSON configs drive solver runs,
// field derivation and the harness checks, with CSV/JSON reports and plain
// two-column plot data.  Everything here is deterministic for a fixed
// config: reports are assembled by an ordered merge regardless of the
// worker count.
namespace phicaloric::runner {

using nlohmann::json;

struct PhiSpec {
  std::string kind = "power";  // power | max_power | min_power | shifted_power
  double p = 3.0;
  double q = 0.0;      // second exponent for max/min kinds
  double shift = 0.0;  // shift amount for shifted_power
};

struct RunSpec {
  std::string id;
  std::string preset;
  double amplitude = 1.0;
  std::uint64_t seed = 1;
  bool elliptic = false;  // stationary solve instead of a time march
  double mass = 0.25;     // profile constant for the source-type preset
  double t_offset = 1.0;
  double center[2] = {-0.25, 0.5};
};

struct CylinderSpec {
  std::string id;
  double t0 = 0.0;
  double x0[2] = {0.5, 0.5};
  double R = 0.1;
  std::string alpha_policy = "fixed";  // fixed | intrinsic
  double alpha = 1.0;                  // used directly when fixed
};

struct CheckSpec {
  std::string name;
  json options;  // per-check knobs, may be empty
};

struct Envelopes {
  double ratio_max = 1e9;
  double beta_max = 3.2;
  double c_emp_max = 1e9;
};

struct ExperimentConfig {
  PhiSpec phi;
  GridSpec grid;  // preset callbacks are attached per run
  std::vector<RunSpec> runs;
  std::vector<CylinderSpec> cylinders;
  std::vector<CheckSpec> checks;
  Envelopes envelopes;
  std::string out_dir = "reports";
  std::string format = "csv";  // csv | json row reports
  double kappa_cal = 1.0;      // top-level calibration constant
  int k_max = 8;               // truncation depth for traces
  std::string gamma_mode = "auto";  // auto | fixed
  double gamma_fixed = 0.0;
  int workers = 1;
};

// Parses and validates; throws ConfigError with a JSON-pointer path into
// the offending node.
ExperimentConfig parse_config(const json& j);
json load_config_file(const std::string& path);  // throws ConfigError

// FNV-1a 64 over the canonical (sorted-key, minimal) serialization, as a
// 16-digit hex string.  Recorded in every output file.
std::string config_hash(const json& j);

// Code revision baked in at configure time (git describe of the tree).
const char* code_version();

struct ReportRow {
  std::string run_id, cyl_id;
  int k = -1;  // rung / sweep index; -1 for scalar quantities
  std::string quantity;
  double value = 0.0;
};

struct CheckSummary {
  std::string check;
  double max_ratio = 0.0;
  bool pass = true;
};

struct ExperimentResult {
  int exit_code = 0;  // 0 pass, 1 assertion fail, 2 config, 3 no convergence
  std::string hash;
  std::vector<CheckSummary> summaries;
  std::vector<std::string> failures;
  std::vector<std::string> nonconverged;  // run ids
};

enum class Mode { Solve, Check, Suite };

struct RunnerOptions {
  Mode mode = Mode::Suite;
  std::string out_override;
  int workers_override = 0;  // 0 keeps the config value
  bool has_seed_override = false;
  std::uint64_t seed_override = 0;  // run i gets seed_override + i
  std::string format_override;
};

// Executes the pipeline: solve (cached) -> derive fields -> checks ->
// reports.  `raw` is the original JSON (hashed into every output).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const json& raw,
                                const RunnerOptions& opt);

// Check catalog for the CLI.
const std::vector<std::string>& check_names();
// Behavioral documentation; empty string for unknown names (aliases with a
// verify_ prefix resolve to the same text).
std::string describe_check(const std::string& name);

// Growth function from its spec.
OrliczPtr make_phi(const PhiSpec& spec);

// Empirical recursion constant of a truncation trace: the smallest C with
//   W_{k+1} <= C * 2^{3k(1+2/n)} * W_k * (W_k / M)^{2/n}
// over the active rungs, with gate M = min{ rho(g) a^{(n-2)/2}, g^2/a }.
// b and alpha are the induced recursion parameters 2^{3(1+2/n)} and 2/n.
struct RecursionFit {
  double C = 0.0;
  double b = 0.0;
  double alpha = 0.0;
  double M = 0.0;
  int rungs = 0;  // transitions that constrained C
};

double gate_M(const OrliczPtr& phi, int n, double gamma_inf, double alpha);
RecursionFit fit_recursion(const DeGiorgiTrace& tr, const OrliczPtr& phi,
                           int n);

// Value-distribution quantile of v over the inner cylinder window (cells
// centered in B_R, snapshots in (t0 - alpha R^2, t0]).  Levels for the
// energy-estimate sweep come from here so they stay inside the local range.
double quantile_v_inner(const GradOrField& f, const ParabolicCylinder& cyl,
                        double q);

}  // namespace phicaloric::runner
