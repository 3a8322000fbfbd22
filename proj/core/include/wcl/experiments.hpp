#pragma once
//
// Experiment runner: reads a JSON run configuration naming a model file and
// one experiment, executes the requested sweeps, and writes plot-ready CSV
// files plus a JSON manifest with content hashes, timing, and pass/fail
// checks.  Numeric output is deterministic: fixed grids, fixed merge order,
// and %.17g formatting throughout.
//
// Experiments
//   davies           generator assembly: structured dump + residual table
//   lindblad-evolve  semigroup evolution of a state, positivity certificates
//   full-evolve      reduced grid dynamics vs the semigroup, with a bound
//   wcl-sweep        sup-over-time gap per coupling, strict decrease check
//   correlations     multi-time insertion chains vs their semigroup limit
//   resummation-check  vertex expansion of the propagator around the
//                      vacuum compression, element by element
//   dilation-check   repeated-collision contraction and channel vs limits
//   extended-wcl     grid matrix elements vs the time-bin Langevin product
//   theta-check      second-quantized multiplication compression limits
//   pairings         pairing combinatorics tables (optional bracket dump)
//
#include <wcl/numerics.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace wcl::lab {

inline constexpr const char* kVersion = "1.0.0";
// Environment variable naming the default output root.
inline constexpr const char* kOutEnv = "WCL_LAB_OUT";

struct RunConfig {
  std::string config_path;  // origin file (hashed into the manifest)
  std::string model_path;
  std::string experiment;
  std::string out_dir;      // resolved output directory

  std::vector<double> lambdas;
  std::vector<double> times;
  std::vector<double> dts;
  std::vector<int> modes;         // reservoir modes per channel
  std::vector<int> orders;        // pairing sizes (pairings experiment)

  double tolerance = 1e-4;        // experiment-level acceptance tolerance
  std::uint64_t seed = 0;
  bool deterministic = true;
  int jobs = 1;

  int n_max = 2;                  // Fock truncation for grid propagation
  int order = 2;                  // expansion order for bound columns
  int max_m = 2;                  // resummation vertex cutoff
  int ell = 1;                    // number of correlation insertions
  double pad = 8.0;               // time-bin lattice padding
  double radius = 6.0;            // frequency-profile support radius
  bool dump_pairings = false;

  bool has_observable = false;
  Mat observable;                 // correlations insertion (default diag +-1)
  bool has_initial = false;
  Vec initial;                    // lindblad-evolve initial vector

  // Parse bookkeeping: true when the key appeared in the file.  A grid that
  // was given but is empty is rejected by validate(); an absent grid is
  // filled with experiment defaults by finalize_config().
  bool lambdas_given = false;
  bool times_given = false;
  bool dts_given = false;
  bool modes_given = false;
  bool orders_given = false;
};

// Parses the JSON run configuration.  Unknown keys are rejected; malformed
// JSON or wrong-typed fields throw std::runtime_error naming the field.
RunConfig parse_config(const std::string& path);

// Fills unset sweep grids with the experiment defaults and resolves the
// output directory (config value, then $WCL_LAB_OUT/<experiment>, then
// ./wcl-out/<experiment>).  `out_override` wins when nonempty.
void finalize_config(RunConfig& config, const std::string& out_override = "");

// Configuration diagnostics: empty grids, nonpositive couplings or
// tolerances, missing model, unwritable output directory, and a predicted
// recurrence-guard violation (with a suggested mode count).  Empty result
// means the config is runnable.
std::vector<std::string> validate(const RunConfig& config);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;   // fnv1a64 of the config file bytes, hex
  std::string model_hash;    // fnv1a64 of the model file bytes, hex
  std::string version;
  std::vector<std::string> files;  // written outputs, relative to out_dir
  double wall_ms = 0.0;
  std::vector<CheckResult> checks;
  bool pass = false;         // conjunction of all checks

  std::string to_json() const;
};

// Runs the configured experiment, writes its CSV outputs and manifest.json
// under config.out_dir, and returns the manifest.  Throws
// std::invalid_argument listing the diagnostics when validation fails.
RunManifest run(const RunConfig& config);

}  // namespace wcl::lab
