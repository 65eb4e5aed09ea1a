#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curvetomo/cli_runner.hpp"

int main(int argc, char** argv) {
  using namespace curvetomo;
  CLI::App app{"curvetomo: weighted curve-transform experiments"};
  std::string pipeline, config_path, out;
  std::vector<std::string> sets;
  long long seed = -1;
  int threads = 0;
  bool print_config = false;

  std::vector<std::string> allowed = pipeline_names();
  allowed.push_back("validate");
  app.add_option("pipeline", pipeline, "pipeline to run, or 'validate' for a dry run")
      ->required()
      ->check(CLI::IsMember(allowed));
  app.add_option("-c,--config", config_path, "experiment config file");
  app.add_option("-o,--out", out, "output directory");
  app.add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "worker threads (default: all cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", sets, "override section.key=value")->take_all();
  app.add_flag("--print-config", print_config, "print the effective config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (pipeline != "validate") cfg.pipeline = pipeline;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    for (const auto& s : sets) apply_setting(cfg, s);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  if (print_config) {
    std::cout << emit_config(cfg);
    return 0;
  }
  const auto diags = validate(cfg);
  for (const auto& d : diags) std::cerr << "diagnostic: " << d << "\n";
  if (pipeline == "validate") {
    if (diags.empty()) std::cout << "config is runnable\n";
    return diags.empty() ? 0 : 1;
  }
  if (!diags.empty()) return 1;

  RunOptions opts;
  opts.out_dir = out;
  opts.threads = threads;
  const RunResult r = run(cfg, opts);
  std::cout << cfg.pipeline << ": " << (r.status == 0 ? "ok" : "failed") << " -> " << r.out_dir
            << "\n";
  if (!r.message.empty()) std::cerr << r.message << "\n";
  return r.status;
}
