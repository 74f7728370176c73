#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cmt/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Constrained mass transport sampler"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  auto* run_cmd = app.add_subcommand("run", "Run the annealing loop for one config");
  run_cmd->add_option("--config", config_path, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Override loop.seed");
  run_cmd->add_option("--out", out_dir, "Override output.run_dir");

  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Write summary.csv and final_metrics.json for a run directory");
  report_cmd->add_option("--out", report_dir, "Run directory")->required();

  std::string sweep_config;
  std::string grid_path;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Cartesian parameter sweep over a base config");
  sweep_cmd->add_option("--config", sweep_config, "Base config file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--grid", grid_path, "Grid file (key = v1, v2, ...)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep_out, "Root directory for the sweep (default: output.run_dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      cmt::RunConfig cfg = cmt::load_config(config_path);
      if (seed) cfg.loop.seed = *seed;
      if (!out_dir.empty()) cfg.output.run_dir = out_dir;
      const cmt::RunResult res = cmt::run(cfg);
      const auto& m = res.metrics;
      std::cout << (res.converged ? "converged" : "hit max_steps") << " after " << m.steps << " steps\n"
                << "log_z_hat " << m.log_z_hat << " +- " << m.log_z_se << ", eubo " << m.eubo.value << ", elbo "
                << m.elbo << ", reverse ess " << m.ess_reverse_frac << ", mode tv " << m.mode_mass_tv << "\n"
                << "outputs in " << cfg.output.run_dir << "\n";
      return res.exit_code();
    }
    if (*report_cmd) {
      cmt::report(report_dir);
      std::cout << "wrote " << report_dir << "/summary.csv and final_metrics.json\n";
      return 0;
    }
    if (*sweep_cmd) {
      const cmt::RunConfig base = cmt::load_config(sweep_config);
      const auto grid = cmt::parse_sweep_grid(grid_path);
      const std::string root = sweep_out.empty() ? base.output.run_dir : sweep_out;
      const std::size_t failed = cmt::sweep(base, grid, root);
      std::cout << "sweep summary in " << root << "/sweep_summary.csv\n";
      return failed == 0 ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
