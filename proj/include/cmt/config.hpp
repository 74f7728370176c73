#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmt/dual.hpp"
#include "cmt/mixture.hpp"
#include "cmt/targets.hpp"

namespace cmt {

enum class ScheduleMode { combined, tr_only, ent_only, fixed_linear };

ScheduleMode parse_schedule_mode(const std::string& name);
std::string to_string(ScheduleMode mode);

struct FamilyConfig {
  std::size_t k_comp = 1;
  FitConfig fit;
  double init_entropy_scale = 5.0;  ///< per-coordinate standard deviation of q̂_0
  std::vector<double> init_mean;    ///< empty means the origin; one value is broadcast
  double init_jitter = 0.05;        ///< component mean jitter, in units of init_entropy_scale
};

struct LoopConfig {
  std::size_t buffer_size = 100000;
  std::size_t max_steps = 100;
  double terminal_multiplier_tol = 1e-6;
  bool refresh_buffer_every_step = true;
  std::uint64_t seed = 0;
};

struct OutputConfig {
  std::string run_dir = "run";
  bool emit_model_snapshots = false;
  bool wall_clock = false;  ///< record wall_ms; off keeps telemetry byte-reproducible
};

struct EvalConfig {
  std::size_t model_samples = 0;      ///< final-model buffer size; 0 uses loop.buffer_size
  std::size_t reference_samples = 0;  ///< exact target draws for EUBO; 0 uses loop.buffer_size
};

struct RunConfig {
  TargetSpec target;
  FamilyConfig family;
  DualConfig dual;
  LoopConfig loop;
  ScheduleMode schedule_mode = ScheduleMode::combined;
  OutputConfig output;
  EvalConfig eval;

  /// Throws ContractViolation describing the first violated constraint.
  void validate() const;
};

/// Sets one field from its dotted key (e.g. "dual.eps_tr"). Unknown keys and
/// unparsable values throw ContractViolation.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Flat "key = value" text, one field per line, ';' or '#' comments.
/// INI-style [section] headers prefix the keys that follow.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Canonical "key = value" rendering of every field (round-trips through parse_config).
std::string render_config(const RunConfig& cfg);

}  // namespace cmt
