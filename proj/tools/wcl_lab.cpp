// wcl-lab: runs one laboratory experiment described by a JSON config and
// writes CSV results plus a manifest into an output directory.
//
// Exit codes: 0 when every manifest check passes, 1 when the run completes
// but a check fails (or a runtime error aborts it), 2 for usage, config
// parse, or validation errors.

#include <wcl/experiments.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

namespace {

void print_summary(const wcl::lab::RunManifest& man) {
  std::printf("experiment : %s\n", man.experiment.c_str());
  std::printf("output     : %zu file(s)", man.files.size());
  for (const auto& f : man.files) std::printf(" %s", f.c_str());
  std::printf("\n");
  for (const auto& c : man.checks)
    std::printf("check %-32s %s  value=%.6g threshold=%.6g%s%s\n",
                c.name.c_str(), c.pass ? "PASS" : "FAIL", c.value, c.threshold,
                c.detail.empty() ? "" : "  ", c.detail.c_str());
  std::printf("overall    : %s (%.0f ms)\n", man.pass ? "PASS" : "FAIL",
              man.wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-coupling laboratory: Davies generators, Fock dynamics, "
               "and time-bin dilations for small open systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  bool deterministic_flag = false;
  int jobs_override = 0;

  const std::vector<std::string> experiments = {
      "davies",        "lindblad-evolve",   "full-evolve", "wcl-sweep",
      "correlations",  "resummation-check", "dilation-check",
      "extended-wcl",  "theta-check",       "pairings"};
  for (const auto& name : experiments) {
    auto* sub = app.add_subcommand(name, "Run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON run configuration")
        ->required();
    sub->add_option("--out", out_override, "Output directory (overrides config)");
    sub->add_flag("--deterministic", deterministic_flag,
                  "Force deterministic single-ordering execution");
    sub->add_option("--jobs", jobs_override, "Worker threads (overrides config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string chosen = app.get_subcommands().front()->get_name();

  wcl::lab::RunConfig cfg;
  try {
    cfg = wcl::lab::parse_config(config_path);
    if (cfg.experiment != chosen) {
      std::fprintf(stderr,
                   "error: config requests experiment '%s' but the '%s' "
                   "subcommand was invoked\n",
                   cfg.experiment.c_str(), chosen.c_str());
      return 2;
    }
    if (deterministic_flag) cfg.deterministic = true;
    if (cfg.deterministic) cfg.jobs = 1;
    if (jobs_override > 0 && !cfg.deterministic) cfg.jobs = jobs_override;
    wcl::lab::finalize_config(cfg, out_override);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    const auto man = wcl::lab::run(cfg);
    print_summary(man);
    return man.pass ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 1;
  }
}
