// Command line driver: run | batch | export.

#include "safedensity/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace safedensity;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  int stride = -1;
  bool noise_off = false;
  std::optional<double> noise_c;
  std::optional<double> measurement_std;
  std::optional<double> diffusion;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("-c,--config", c.config, "scenario file (default: built-in reference scenario)");
  cmd->add_option("-o,--out", c.out, "output directory");
  cmd->add_option("--snapshot-stride", c.stride, "steps between density frames (0 = none)");
  cmd->add_flag("--noise-off", c.noise_off, "disable motion and measurement noise");
  cmd->add_option("--noise-c", c.noise_c, "actuation noise level c");
  cmd->add_option("--measurement-std", c.measurement_std, "measurement noise std [m]");
  cmd->add_option("--diffusion", c.diffusion, "override the diffusion coefficient T");
  cmd->add_option("--seed", c.seed, "random seed (master seed for batch)");
}

ScenarioConfig resolve(const Common &c) {
  ScenarioConfig cfg = c.config.empty() ? reference_scenario() : load_config(c.config);
  if (c.noise_off)
    cfg = cfg.noise_off();
  if (c.noise_c)
    cfg.noise_c = *c.noise_c;
  if (c.measurement_std)
    cfg.measurement_std = *c.measurement_std;
  if (c.diffusion)
    cfg.diffusion_override = *c.diffusion;
  if (c.seed)
    cfg.seed = *c.seed;
  if (c.stride >= 0)
    cfg.snapshot_stride = c.stride;
  cfg.validate();
  return cfg;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Density control of robot teams under energy and safety constraints"};
  app.require_subcommand(1);

  Common run_opts, batch_opts, export_opts;
  auto *run = app.add_subcommand("run", "simulate one episode and export its log");
  add_common(run, run_opts);
  bool record_paths = false;
  run->add_flag("--record-paths", record_paths, "write planned paths to paths.csv");

  auto *batch = app.add_subcommand("batch", "Monte Carlo batch over noise realisations");
  add_common(batch, batch_opts);
  int runs = 100;
  unsigned threads = 0;
  batch->add_option("--runs", runs, "number of episodes")->check(CLI::PositiveNumber);
  batch->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto *exp = app.add_subcommand("export", "write the resolved scenario, target and masks");
  add_common(exp, export_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ScenarioConfig cfg = resolve(run_opts);
      cfg.record_paths = cfg.record_paths || record_paths;
      const RunLog log = run_episode(cfg, cfg.seed);
      export_run(log, cfg, run_opts.out, cfg.snapshot_stride);
      const RunSummary s = summarize(log);
      std::cout << summary_text(s);
      return log.feasible() && log.clean() ? 0 : 1;
    }
    if (*batch) {
      const ScenarioConfig cfg = resolve(batch_opts);
      const BatchResult b = run_batch(cfg, runs, cfg.seed, threads);
      export_batch(b, batch_opts.out);
      std::cout << summary_text(b);
      return b.clean() ? 0 : 1;
    }
    const ScenarioConfig cfg = resolve(export_opts);
    export_scenario(cfg, export_opts.out);
    std::cout << "wrote " << export_opts.out << "\n";
    return 0;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
