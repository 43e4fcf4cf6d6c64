#include "experiment.hpp"

#include <phicaloric/errors.hpp>
#include <phicaloric/presets.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

// phicaloric-run: drives solver runs and the verification harness from a
// JSON experiment config.
//
// Exit codes: 0 all enabled assertions pass, 1 assertion failures (reports
// complete), 2 configuration or usage errors, 3 solver nonconvergence
// (partial reports kept).

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  int workers = 0;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string format;
};

void attach_flags(CLI::App* cmd, CommonFlags* f, bool needs_config) {
  auto* c = cmd->add_option("--config", f->config, "experiment config (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--out", f->out, "output directory (overrides the config)");
  cmd->add_option("--workers", f->workers, "worker threads (default: config)")
      ->check(CLI::Range(1, 256));
  cmd->add_option("--seed", f->seed,
                  "override run seeds: run i gets seed + i");
  cmd->add_option("--format", f->format, "row report format")
      ->check(CLI::IsMember({"csv", "json"}));
}

int dispatch(phicaloric::runner::Mode mode, const CommonFlags& f,
             bool seed_given) {
  using namespace phicaloric::runner;
  const json raw = load_config_file(f.config);
  const ExperimentConfig cfg = parse_config(raw);
  RunnerOptions opt;
  opt.mode = mode;
  opt.out_override = f.out;
  opt.workers_override = f.workers;
  opt.has_seed_override = seed_given;
  opt.seed_override = f.seed;
  opt.format_override = f.format;
  const ExperimentResult res = run_experiment(cfg, raw, opt);
  std::printf("config %s  version %s\n", res.hash.c_str(), code_version());
  for (const auto& s : res.summaries)
    std::printf("  %-12s max_ratio %.6g  %s\n", s.check.c_str(), s.max_ratio,
                s.pass ? "pass" : "FAIL");
  for (const auto& msg : res.failures)
    std::fprintf(stderr, "fail: %s\n", msg.c_str());
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "phicaloric-run: solver runs and verification checks for degenerate "
      "diffusion with general growth"};
  app.require_subcommand(1);

  CommonFlags sf, cf, uf;
  CLI::App* solve = app.add_subcommand(
      "solve", "execute the solver runs and fill the snapshot cache");
  attach_flags(solve, &sf, true);
  CLI::App* check = app.add_subcommand(
      "check", "run the configured checks and write row reports");
  attach_flags(check, &cf, true);
  CLI::App* suite = app.add_subcommand(
      "suite", "full pipeline: solve, check, summary and plot data");
  attach_flags(suite, &uf, true);
  CLI::App* lp =
      app.add_subcommand("list-presets", "print the initial-data catalog");
  std::string check_name;
  CLI::App* dc = app.add_subcommand("describe-check",
                                    "explain what a named check verifies");
  dc->add_option("name", check_name, "check name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (lp->parsed()) {
      for (const auto& name : phicaloric::preset_names())
        std::printf("%s\n", name.c_str());
      return 0;
    }
    if (dc->parsed()) {
      const std::string doc = phicaloric::runner::describe_check(check_name);
      if (doc.empty()) {
        std::fprintf(stderr, "unknown check '%s'; known checks:\n",
                     check_name.c_str());
        for (const auto& name : phicaloric::runner::check_names())
          std::fprintf(stderr, "  %s\n", name.c_str());
        return 2;
      }
      std::printf("%s\n", doc.c_str());
      return 0;
    }
    if (solve->parsed())
      return dispatch(phicaloric::runner::Mode::Solve, sf,
                      solve->count("--seed") > 0);
    if (check->parsed())
      return dispatch(phicaloric::runner::Mode::Check, cf,
                      check->count("--seed") > 0);
    return dispatch(phicaloric::runner::Mode::Suite, uf,
                    suite->count("--seed") > 0);
  } catch (const phicaloric::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const phicaloric::NonConvergence& e) {
    std::fprintf(stderr, "solver did not converge: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
