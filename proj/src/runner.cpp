#include "cmt/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>

#include "cmt/rng.hpp"
#include "json.hpp"

namespace cmt {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// Independent random streams, combined with the step index where relevant.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBufferStream = 1;
constexpr std::uint64_t kFitStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kReferenceStream = 4;
constexpr std::uint64_t kTerminalStream = 5;

ordered_json null_or(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractViolation("cannot write '" + path.string() + "'");
  out << text;
}

std::string diagnostics_line(const StepRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["entropy_se"] = r.entropy_se;
  j["kl_emp"] = r.kl_emp;
  j["entropy_next_emp"] = r.entropy_next_emp;
  j["lambda_applied"] = r.applied.lambda;
  j["eta_applied"] = r.applied.eta;
  j["dual_rounds"] = r.dual_rounds;
  j["dual_converged"] = r.dual_converged;
  j["components_reset"] = r.components_reset;
  j["terminal"] = r.terminal;
  return j.dump();
}

ordered_json metrics_json(const RunResult& res) {
  const RunMetrics& m = res.metrics;
  ordered_json j;
  j["target"] = to_string(res.config.target.kind);
  j["schedule_mode"] = to_string(res.config.schedule_mode);
  j["seed"] = res.config.loop.seed;
  j["converged"] = res.converged;
  j["steps"] = m.steps;
  j["ess_reverse_frac"] = m.ess_reverse_frac;
  j["eubo"] = std::isfinite(m.eubo.value) ? ordered_json(m.eubo.value) : ordered_json("inf");
  j["eubo_se"] = m.eubo.std_error;
  j["eubo_offending_points"] = m.eubo_offending.size();
  j["elbo"] = std::isfinite(m.elbo) ? ordered_json(m.elbo) : ordered_json("-inf");
  j["elbo_se"] = std::isfinite(m.elbo_se) ? ordered_json(m.elbo_se) : ordered_json("inf");
  j["elbo_clipped"] = m.elbo_clipped;
  j["log_z_hat"] = m.log_z_hat;
  j["log_z_se"] = m.log_z_se;
  j["true_log_z"] = m.true_log_z;
  j["mode_mass_tv"] = m.mode_mass_tv;
  j["hist2d_tv"] = m.hist2d_tv;
  j["basins_populated"] = m.basins_populated;
  j["n_basins"] = m.n_basins;
  if (res.terminal_check) {
    j["terminal_check"] = {{"lambda", res.terminal_check->lambda}, {"eta", res.terminal_check->eta}};
  } else {
    j["terminal_check"] = nullptr;
  }
  ordered_json path = ordered_json::array();
  for (const auto& e : m.per_step) {
    path.push_back({{"step", e.step_index},
                    {"beta", e.beta},
                    {"alpha", e.alpha},
                    {"lambda", e.multipliers.lambda},
                    {"eta", e.multipliers.eta},
                    {"entropy", e.entropy_est},
                    {"log_z", e.log_z_est},
                    {"step_ess", e.step_ess_frac}});
  }
  j["path"] = std::move(path);
  return j;
}

void evaluate(RunResult& res, const LogDensity& target) {
  const RunConfig& cfg = res.config;
  const std::uint64_t seed = cfg.loop.seed;
  const std::size_t n_model = cfg.eval.model_samples ? cfg.eval.model_samples : cfg.loop.buffer_size;
  const std::size_t n_ref = cfg.eval.reference_samples ? cfg.eval.reference_samples : cfg.loop.buffer_size;
  const MixtureModel& q = res.final_model();

  const WeightedBuffer buf = draw_buffer(q, target, n_model, derive_seed(seed, {kEvalStream}));
  RunMetrics& m = res.metrics;
  std::vector<double> log_w(buf.size());
  for (std::size_t k = 0; k < buf.size(); ++k) log_w[k] = buf.log_p()[k] - buf.log_q()[k];
  m.ess_reverse_frac = ess_fraction(log_w, true);
  const EvidenceEstimate ev = elbo_and_logz(buf);
  m.elbo = ev.elbo;
  m.elbo_se = ev.elbo_se;
  m.elbo_clipped = ev.elbo_clipped;
  m.log_z_hat = ev.log_z_hat;
  m.log_z_se = ev.log_z_se;
  m.true_log_z = true_log_z(cfg.target);

  const Points ref = reference_samples(cfg.target, n_ref, derive_seed(seed, {kReferenceStream}));
  const EuboEstimate eu = eubo_estimate(ref, q, target);
  m.eubo = {eu.value, eu.std_error};
  m.eubo_offending = eu.offending;

  const ReferenceStats stats = reference_stats(cfg.target);
  const std::vector<double> masses = empirical_mode_masses(buf.points(), cfg.target);
  m.mode_mass_tv = total_variation(masses, stats.mode_masses);
  m.hist2d_tv = histogram_tv(buf.points(), stats);
  m.n_basins = masses.size();
  m.basins_populated = 0;
  for (const double v : masses) m.basins_populated += v > 0.0 ? 1 : 0;
  m.per_step = res.ledger.entries();
  m.steps = res.steps.size();
  m.converged = res.converged;

  if (res.converged && cfg.schedule_mode != ScheduleMode::fixed_linear) {
    const WeightedBuffer fresh = draw_buffer(q, target, cfg.loop.buffer_size, derive_seed(seed, {kTerminalStream}));
    res.terminal_check = solve_multipliers(fresh, effective_dual(cfg)).multipliers;
  }
}

class RunWriter {
 public:
  RunWriter(const RunConfig& cfg, bool enabled) : cfg_(cfg), enabled_(enabled), dir_(cfg.output.run_dir) {
    if (!enabled_) return;
    fs::create_directories(dir_);
    if (cfg.output.emit_model_snapshots) fs::create_directories(dir_ / "snapshots");
    write_text(dir_ / "config.txt", render_config(cfg));
    telemetry_.open(dir_ / "telemetry.jsonl", std::ios::binary | std::ios::trunc);
    diagnostics_.open(dir_ / "diagnostics.jsonl", std::ios::binary | std::ios::trunc);
    if (!telemetry_ || !diagnostics_) throw ContractViolation("cannot open telemetry files in '" + dir_.string() + "'");
  }

  void snapshot(std::size_t index, const MixtureModel& model) {
    if (!enabled_ || !cfg_.output.emit_model_snapshots) return;
    char name[32];
    std::snprintf(name, sizeof name, "model_%04zu.json", index);
    write_text(dir_ / "snapshots" / name, model.to_json().dump(2) + "\n");
  }

  void step(const StepRecord& rec) {
    if (!enabled_) return;
    telemetry_ << telemetry_line(rec, cfg_.output.wall_clock) << '\n';
    diagnostics_ << diagnostics_line(rec) << '\n';
    telemetry_.flush();
    diagnostics_.flush();
  }

  void failure(std::size_t step, const std::string& what, const MixtureModel& model) {
    if (!enabled_) return;
    ordered_json j;
    j["step"] = step;
    j["error"] = what;
    j["model"] = model.to_json();
    write_text(dir_ / "failure.json", j.dump(2) + "\n");
  }

  void finish(const RunResult& res) {
    if (!enabled_) return;
    write_text(dir_ / "final_model.json", res.final_model().to_json().dump(2) + "\n");
    write_text(dir_ / "metrics.json", metrics_json(res).dump(2) + "\n");
  }

 private:
  const RunConfig& cfg_;
  bool enabled_;
  fs::path dir_;
  std::ofstream telemetry_;
  std::ofstream diagnostics_;
};

RunResult run_loop(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  const LogDensity target = make_target(cfg.target);
  const DualConfig dual = effective_dual(cfg);
  const bool scheduled = cfg.schedule_mode == ScheduleMode::fixed_linear;
  const std::uint64_t seed = cfg.loop.seed;

  RunResult res{cfg, {}, PathLedger(), {initial_model(cfg)}, {}, std::nullopt, false};
  RunWriter writer(cfg, write_files);
  writer.snapshot(0, res.models.back());

  for (std::size_t i = 0; i < cfg.loop.max_steps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const MixtureModel& q = res.models.back();
    try {
      const WeightedBuffer buffer = draw_buffer(q, target, cfg.loop.buffer_size, derive_seed(seed, {kBufferStream, i}));
      StepRecord rec;
      rec.step = i;
      rec.entropy = entropy_estimate(buffer);
      rec.entropy_se = entropy_standard_error(buffer);

      double next_beta = 1.0;
      if (scheduled) {
        const double beta = res.ledger.back().beta;
        next_beta = static_cast<double>(i + 1) / static_cast<double>(cfg.loop.max_steps);
        const double b = (next_beta - beta) / (1.0 - beta);
        rec.applied = {(1.0 - b) / b, 0.0};
        rec.terminal = i + 1 == cfg.loop.max_steps;
      } else {
        const MultiplierSolution sol = solve_multipliers(buffer, dual);
        rec.dual_rounds = sol.rounds;
        rec.dual_converged = sol.converged;
        if (!sol.converged) {
          std::cerr << "warning: step " << i << ": multiplier search hit " << dual.max_rounds
                    << " rounds without settling; continuing with the last iterate\n";
        }
        rec.multipliers = sol.multipliers;
        rec.applied = sol.multipliers;
        const double tol = cfg.loop.terminal_multiplier_tol;
        if (sol.multipliers.lambda <= tol && sol.multipliers.eta <= tol) {
          rec.terminal = true;
          rec.applied = {0.0, 0.0};
        }
      }

      rec.log_z_hat = log_z_estimate(buffer, rec.applied);
      const std::vector<double> log_r = log_importance_ratios(buffer, rec.applied, rec.log_z_hat);
      rec.step_ess = ess_fraction(log_r, false);
      const RealizedConstraints realized = realized_constraints(buffer, rec.applied);
      rec.kl_emp = realized.kl;
      rec.entropy_next_emp = realized.entropy_next;

      const std::vector<double> weights = importance_weights(buffer, rec.applied, rec.log_z_hat);
      FitResult fit = weighted_fit(q, buffer, weights, cfg.family.fit, derive_seed(seed, {kFitStream, i}));
      rec.em_iters = fit.report.em_iterations;
      rec.components_reset = fit.report.degenerate_components_reset;

      if (scheduled) {
        res.ledger.append_scheduled(next_beta, rec.entropy, rec.log_z_hat, rec.step_ess);
      } else {
        res.ledger.append(rec.applied, rec.entropy, rec.log_z_hat, rec.step_ess);
      }
      rec.beta_next = res.ledger.back().beta;
      rec.alpha_next = res.ledger.back().alpha;
      if (cfg.output.wall_clock) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      }

      res.models.push_back(std::move(fit.model));
      writer.snapshot(i + 1, res.models.back());
      writer.step(rec);
      res.steps.push_back(rec);
      if (rec.terminal) {
        res.converged = true;
        break;
      }
    } catch (const ContractViolation&) {
      throw;
    } catch (const std::exception& e) {
      writer.failure(i, e.what(), res.models.back());
      throw RunAborted(i, e.what());
    }
  }

  evaluate(res, target);
  writer.finish(res);
  return res;
}

}  // namespace

MixtureModel initial_model(const RunConfig& cfg) {
  const std::size_t d = cfg.target.dim;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  if (cfg.family.init_mean.size() == 1) mean.setConstant(cfg.family.init_mean[0]);
  if (cfg.family.init_mean.size() == d && d > 1) {
    for (std::size_t i = 0; i < d; ++i) mean[static_cast<Eigen::Index>(i)] = cfg.family.init_mean[i];
  }
  return MixtureModel::isotropic(d, cfg.family.k_comp, mean, cfg.family.init_entropy_scale, cfg.family.init_jitter,
                                 derive_seed(cfg.loop.seed, {kInitStream}));
}

DualConfig effective_dual(const RunConfig& cfg) {
  DualConfig d = cfg.dual;
  switch (cfg.schedule_mode) {
    case ScheduleMode::combined:
      d.tr_enabled = true;
      d.ent_enabled = true;
      break;
    case ScheduleMode::tr_only:
    case ScheduleMode::fixed_linear:
      d.tr_enabled = true;
      d.ent_enabled = false;
      break;
    case ScheduleMode::ent_only:
      d.tr_enabled = false;
      d.ent_enabled = true;
      break;
  }
  return d;
}

RunResult run(const RunConfig& cfg, bool write_files) { return run_loop(cfg, write_files); }

RunResult run_fixed_linear(const RunConfig& cfg, bool write_files) {
  if (cfg.schedule_mode != ScheduleMode::fixed_linear) {
    throw ContractViolation("run_fixed_linear: schedule_mode must be fixed_linear");
  }
  return run_loop(cfg, write_files);
}

std::string telemetry_line(const StepRecord& rec, bool wall_clock) {
  ordered_json j;
  j["step"] = rec.step;
  j["lambda"] = rec.multipliers ? ordered_json(rec.multipliers->lambda) : ordered_json(nullptr);
  j["eta"] = rec.multipliers ? ordered_json(rec.multipliers->eta) : ordered_json(nullptr);
  j["beta"] = rec.beta_next;
  j["alpha"] = rec.alpha_next;
  j["entropy"] = rec.entropy;
  j["step_ess"] = rec.step_ess;
  j["log_z_hat"] = rec.log_z_hat;
  j["em_iters"] = rec.em_iters;
  j["wall_ms"] = wall_clock ? null_or(rec.wall_ms) : ordered_json(nullptr);
  return j.dump();
}

namespace {

const char* const kTelemetryKeys[] = {"step",    "lambda",   "eta",       "beta",     "alpha",
                                      "entropy", "step_ess", "log_z_hat", "em_iters", "wall_ms"};

std::string csv_field(const ordered_json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

void report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw ContractViolation("report: '" + run_dir + "' is not a directory");
  if (fs::is_empty(dir)) throw ContractViolation("report: '" + run_dir + "' is empty");
  const fs::path telemetry = dir / "telemetry.jsonl";
  const fs::path metrics = dir / "metrics.json";
  std::vector<std::string> defects;
  if (!fs::exists(telemetry)) defects.push_back("missing telemetry.jsonl");
  if (!fs::exists(metrics)) defects.push_back("missing metrics.json (run incomplete?)");

  std::vector<ordered_json> rows;
  if (fs::exists(telemetry)) {
    std::ifstream in(telemetry);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      ordered_json j;
      try {
        j = ordered_json::parse(line);
      } catch (const nlohmann::json::exception&) {
        defects.push_back("telemetry.jsonl line " + std::to_string(lineno) + ": not valid JSON");
        continue;
      }
      for (const char* key : kTelemetryKeys) {
        if (!j.contains(key)) defects.push_back("telemetry.jsonl line " + std::to_string(lineno) + ": missing key '" + key + "'");
      }
      if (j.contains("step") && (!j["step"].is_number_unsigned() || j["step"].get<std::size_t>() != rows.size())) {
        defects.push_back("telemetry.jsonl line " + std::to_string(lineno) + ": step out of sequence");
      }
      rows.push_back(std::move(j));
    }
    if (rows.empty()) defects.push_back("telemetry.jsonl has no records");
  }
  ordered_json final_metrics;
  if (fs::exists(metrics)) {
    std::ifstream in(metrics);
    try {
      final_metrics = ordered_json::parse(in);
    } catch (const nlohmann::json::exception&) {
      defects.push_back("metrics.json: not valid JSON");
    }
  }
  if (!defects.empty()) {
    std::string msg = "report: run directory '" + run_dir + "' is unusable:";
    for (const auto& d : defects) msg += "\n  - " + d;
    throw ContractViolation(msg);
  }

  std::ostringstream csv;
  csv << "i,lambda,eta,beta,alpha,entropy,step_ess,log_z_hat\n";
  for (const auto& r : rows) {
    csv << csv_field(r["step"]) << ',' << csv_field(r["lambda"]) << ',' << csv_field(r["eta"]) << ','
        << csv_field(r["beta"]) << ',' << csv_field(r["alpha"]) << ',' << csv_field(r["entropy"]) << ','
        << csv_field(r["step_ess"]) << ',' << csv_field(r["log_z_hat"]) << '\n';
  }
  write_text(dir / "summary.csv", csv.str());
  final_metrics.erase("path");
  write_text(dir / "final_metrics.json", final_metrics.dump(2) + "\n");
}

std::vector<SweepAxis> parse_sweep_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("sweep: cannot open grid '" + path + "'");
  std::vector<SweepAxis> axes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    boost::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractViolation("sweep grid line " + std::to_string(lineno) + ": expected key = values");
    SweepAxis axis;
    axis.key = boost::trim_copy(line.substr(0, eq));
    std::vector<std::string> parts;
    const std::string rhs = line.substr(eq + 1);
    boost::split(parts, rhs, [](char c) { return c == ','; });
    for (auto& p : parts) {
      boost::trim(p);
      if (!p.empty()) axis.values.push_back(p);
    }
    if (axis.key.empty() || axis.values.empty()) {
      throw ContractViolation("sweep grid line " + std::to_string(lineno) + ": empty key or value list");
    }
    RunConfig probe;
    set_config_value(probe, axis.key, axis.values.front());  // rejects unknown keys early
    axes.push_back(std::move(axis));
  }
  if (axes.empty()) throw ContractViolation("sweep: grid '" + path + "' defines no axes");
  return axes;
}

std::size_t sweep(const RunConfig& base, const std::vector<SweepAxis>& grid, const std::string& out_root) {
  std::size_t total = 1;
  for (const auto& a : grid) total *= a.values.size();
  fs::create_directories(out_root);

  std::ostringstream csv;
  csv << "run";
  for (const auto& a : grid) csv << ',' << a.key;
  csv << ",converged,steps,ess_reverse_frac,eubo,elbo,log_z_hat,mode_mass_tv,hist2d_tv,error\n";

  std::size_t failures = 0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    RunConfig cfg = base;
    std::vector<std::string> chosen;
    std::size_t rem = idx;
    // Last axis varies fastest.
    std::vector<std::size_t> pick(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      pick[a] = rem % grid[a].values.size();
      rem /= grid[a].values.size();
    }
    for (std::size_t a = 0; a < grid.size(); ++a) {
      set_config_value(cfg, grid[a].key, grid[a].values[pick[a]]);
      chosen.push_back(grid[a].values[pick[a]]);
    }
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", idx);
    cfg.output.run_dir = (fs::path(out_root) / name).string();

    csv << name;
    for (const auto& v : chosen) csv << ',' << v;
    try {
      const RunResult res = run(cfg);
      const RunMetrics& m = res.metrics;
      csv << ',' << (res.converged ? "true" : "false") << ',' << m.steps << ',' << m.ess_reverse_frac << ','
          << m.eubo.value << ',' << m.elbo << ',' << m.log_z_hat << ',' << m.mode_mass_tv << ',' << m.hist2d_tv
          << ",\n";
      if (!res.converged) ++failures;
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (auto& c : msg) {
        if (c == ',' || c == '\n') c = ' ';
      }
      csv << ",false,,,,,,,," << msg << '\n';
      ++failures;
    }
  }
  write_text(fs::path(out_root) / "sweep_summary.csv", csv.str());
  return failures;
}

}  // namespace cmt
