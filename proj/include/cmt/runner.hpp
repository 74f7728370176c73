#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmt/config.hpp"
#include "cmt/metrics.hpp"
#include "cmt/mixture.hpp"
#include "cmt/path.hpp"

namespace cmt {

/// Everything measured while taking one annealing step i (q_i -> q_{i+1}).
struct StepRecord {
  std::size_t step = 0;
  std::optional<MultiplierPair> multipliers;  ///< empty for scheduled (fixed_linear) steps
  MultiplierPair applied;                     ///< multipliers actually used, implied ones included
  double beta_next = 0.0;
  double alpha_next = 0.0;
  double entropy = 0.0;  ///< H(q̂_i) estimate on the step buffer
  double entropy_se = 0.0;
  double step_ess = 0.0;
  double log_z_hat = 0.0;  ///< log Ẑ_{i+1} at the applied multipliers
  double kl_emp = 0.0;     ///< realized KL(q_{i+1} || q̂_i) on the buffer
  double entropy_next_emp = 0.0;
  int dual_rounds = 0;
  bool dual_converged = true;
  int em_iters = 0;
  int components_reset = 0;
  bool terminal = false;
  std::optional<double> wall_ms;
};

struct RunResult {
  RunConfig config;
  std::vector<StepRecord> steps;
  PathLedger ledger;
  std::vector<MixtureModel> models;  ///< q̂_0 ... q̂_I
  RunMetrics metrics;
  std::optional<MultiplierPair> terminal_check;  ///< fresh-buffer re-solve after convergence
  bool converged = false;

  const MixtureModel& final_model() const { return models.back(); }
  int exit_code() const { return converged ? 0 : 2; }
};

/// A run that stopped on an error; the message names the step, and a
/// failure.json with the step index and the last model is left in run_dir.
class RunAborted : public std::runtime_error {
 public:
  RunAborted(std::size_t step, const std::string& what)
      : std::runtime_error("run aborted at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Initial broad model q̂_0 for the config.
MixtureModel initial_model(const RunConfig& cfg);

/// Dual configuration with the constraints switched on or off by schedule_mode.
DualConfig effective_dual(const RunConfig& cfg);

/// Runs the annealing loop. With write_files, the run directory receives
/// config.txt, telemetry.jsonl, diagnostics.jsonl, metrics.json, final_model.json
/// and, if enabled, snapshots/.
RunResult run(const RunConfig& cfg, bool write_files = true);

/// Geometric path q_0^{1-β} p̃^β on β_i = i / max_steps, fitted the same way.
RunResult run_fixed_linear(const RunConfig& cfg, bool write_files = true);

/// One telemetry line (no trailing newline).
std::string telemetry_line(const StepRecord& rec, bool wall_clock);

/// Writes summary.csv and final_metrics.json from a finished run directory.
/// Throws ContractViolation listing the defect when the directory is unusable.
void report(const std::string& run_dir);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

/// Lines "key = v1, v2, ..."; '#' starts a comment.
std::vector<SweepAxis> parse_sweep_grid(const std::string& path);

/// Runs the Cartesian product of the grid over the base config, one run
/// directory per point under out_root, and writes out_root/sweep_summary.csv.
/// Returns the number of runs that did not converge.
std::size_t sweep(const RunConfig& base, const std::vector<SweepAxis>& grid, const std::string& out_root);

}  // namespace cmt
