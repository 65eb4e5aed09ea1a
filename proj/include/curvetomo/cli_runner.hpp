#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvetomo/scenario_library.hpp"

namespace curvetomo {

/// Pipelines the runner knows, in CLI spelling.
const std::vector<std::string>& pipeline_names();

/// One experiment. Sections of the text format in brackets.
struct ExperimentConfig {
  // [run]
  std::string pipeline = "forward";
  std::string scenario = "lines_disk";
  std::uint64_t seed = 1;
  std::string output;  // empty: CLI flag, environment or ./curvetomo_out

  // [scenario]: overrides of the scenario defaults
  ParamMap overrides;

  // [resolution]
  int grid = 64;
  int grid_fine = 96;  // second grid of the stability refinement; 0 skips it
  int surface = 64;
  int direction = 64;
  double h = 1e-2;
  bool cache = true;

  // [tolerances]
  double tol_solver = 1e-6;
  double tol_lanczos = 1e-4;
  double tol_ode = 1e-3;
  double tol_conjugate = 1e-2;
  double tol_symbol = 1e-6;
  double tol_probe = 5e-2;
  double tol_correlation = 0.9;
  double tol_gronwall = 2.0;

  // [pipeline]
  std::string phantom = "smooth";
  int max_iter = 500;
  int trials = 50;
  int probes = 3;
  int points = 16;
  int directions = 32;
  int curves = 64;  // curves examined by the conjugate scan
  std::vector<double> deltas{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::vector<std::string> channels{"G", "mu", "sigma", "w", "alpha"};
  std::vector<double> frequencies{16.0, 32.0};
  std::vector<double> x0{0.1, 0.05};
  std::vector<double> xi{0.955336489125606, 0.29552020666134};
  double window = 0.6;
  double horizon = 1.0;
  double delta = 1e-2;
  bool lanczos = false;
  int lanczos_modes = 24;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parser: unknown sections or keys, bad types and scenario overrides
/// that the scenario does not define throw ConfigError with the line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical text form; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& c);
/// Applies "section.key=value".
void apply_setting(ExperimentConfig& c, const std::string& assignment);

/// Dry-run diagnostics; empty means runnable.
std::vector<std::string> validate(const ExperimentConfig& c);

struct RunOptions {
  std::string out_dir;  // overrides the config and the environment
  int threads = 0;      // 0 keeps the default
};

struct RunResult {
  int status = 0;  // 0 success, 1 config error, 2 failed check or no convergence
  std::string out_dir;
  std::string message;
  std::vector<std::string> files;  // written artifacts, manifest last
};

/// Output directory: options, then the config, then $CURVETOMO_OUT/<pipeline>,
/// then ./curvetomo_out/<pipeline>.
std::string resolve_output_dir(const ExperimentConfig& c, const RunOptions& opts);

/// Runs the configured pipeline and writes its artifacts, manifest.json
/// (deterministic) and run_info.json (timings).
RunResult run(const ExperimentConfig& c, const RunOptions& opts = {});

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace curvetomo
