// Acceptance suite. `acceptance N` runs criterion N (1-9), `acceptance` runs all;
// each prints one PASS/FAIL line and the exit status is non-zero on any FAIL.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <boost/random/uniform_real_distribution.hpp>

#include "cmt/config.hpp"
#include "cmt/dual.hpp"
#include "cmt/path.hpp"
#include "cmt/quadrature.hpp"
#include "cmt/rng.hpp"
#include "cmt/runner.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail: " << what << "]";
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

cmt::RunConfig gauss1d_config(std::uint64_t seed) {
  cmt::RunConfig cfg;
  cfg.target.kind = cmt::TargetKind::gauss1d;
  cfg.target.mu = 1.0;
  cfg.target.sigma = 0.5;
  cfg.target.offset = 2.0;
  cfg.family.k_comp = 1;
  cfg.family.init_entropy_scale = 5.0;
  cfg.loop.buffer_size = 100000;
  cfg.loop.max_steps = 60;
  cfg.loop.seed = seed;
  return cfg;
}

cmt::RunConfig gmm_config(std::uint64_t seed, cmt::ScheduleMode mode) {
  cmt::RunConfig cfg;
  cfg.target.kind = cmt::TargetKind::gmm_grid;
  cfg.target.dim = 2;
  cfg.target.grid_size = 3;
  cfg.target.sigma = 0.3;
  cfg.target.spacing = 4.0;
  cfg.family.k_comp = 25;
  cfg.family.init_entropy_scale = 5.0;
  cfg.family.init_jitter = 0.5;
  cfg.schedule_mode = mode;
  cfg.loop.buffer_size = 100000;
  cfg.loop.max_steps = mode == cmt::ScheduleMode::fixed_linear ? 10 : 60;
  cfg.loop.seed = seed;
  return cfg;
}

// q̂_0 sits in the lower-left basin, so the far basins must be reached by transport.
cmt::RunConfig gmm_offcenter_config(std::uint64_t seed, cmt::ScheduleMode mode) {
  auto cfg = gmm_config(seed, mode);
  cfg.family.init_mean = {-4.0};
  cfg.family.init_entropy_scale = 2.5;
  cfg.dual.eps_ent = 0.3;
  return cfg;
}

cmt::RunConfig many_well_config(std::uint64_t seed) {
  cmt::RunConfig cfg;
  cfg.target.kind = cmt::TargetKind::many_well;
  cfg.target.dim = 5;
  cfg.family.k_comp = 32;
  cfg.family.init_entropy_scale = 3.0;
  cfg.family.init_jitter = 0.5;
  cfg.family.fit.em_max_iters = 30;
  cfg.loop.buffer_size = 100000;
  cfg.loop.max_steps = 60;
  cfg.loop.seed = seed;
  return cfg;
}

cmt::RunConfig funnel_config(std::uint64_t seed) {
  cmt::RunConfig cfg;
  cfg.target.kind = cmt::TargetKind::funnel;
  cfg.target.dim = 10;
  cfg.family.k_comp = 10;
  cfg.family.init_entropy_scale = 3.0;
  cfg.family.init_jitter = 0.5;
  cfg.family.fit.em_max_iters = 30;
  cfg.loop.buffer_size = 100000;
  cfg.loop.max_steps = 60;
  cfg.loop.seed = seed;
  return cfg;
}

// 1. Every step's importance-weight ESS fraction stays above 1/(1+2ε_tr) - 0.05.
Verdict criterion1() {
  Verdict v;
  const double floor = 1.0 / (1.0 + 2.0 * 0.3) - 0.05;
  const std::vector<std::pair<std::string, cmt::RunConfig>> runs{
      {"gauss1d", gauss1d_config(1)},
      {"gmm_grid", gmm_config(1, cmt::ScheduleMode::combined)},
      {"many_well5", many_well_config(1)},
      {"funnel10", funnel_config(1)}};
  for (const auto& [name, cfg] : runs) {
    const auto res = cmt::run(cfg, false);
    double worst = 1.0;
    std::size_t worst_step = 0;
    for (const auto& s : res.steps) {
      if (s.step_ess < worst) {
        worst = s.step_ess;
        worst_step = s.step;
      }
    }
    v.detail << " " << name << " min=" << fmt(worst) << "@" << worst_step;
    v.require(worst >= floor, name + " step ESS " + fmt(worst) + " < " + fmt(floor) + " at step " +
                                  std::to_string(worst_step));
    v.require(res.converged, name + " did not converge");
  }
  return v;
}

// 2. Quadrature-exact annealing on gauss1d: realized KL equals ε_tr at every non-terminal step.
Verdict criterion2() {
  Verdict v;
  const oracle::Gauss target{1.0, 0.25};
  const cmt::LogDensity p(1, [&](std::span<const double> x) {
    return 2.0 - 0.5 * std::log(2.0 * std::numbers::pi * target.var) - 0.5 * (x[0] - target.mean) * (x[0] - target.mean) / target.var;
  });
  const oracle::Gauss start{0.0, 25.0};
  const auto grid = cmt::make_grid(cmt::Box{{-60.0}, {60.0}}, 24000);
  for (const double eps : {0.1, 0.3, 1.0}) {
    cmt::DualConfig cfg;
    cfg.eps_tr = eps;
    cfg.ent_enabled = false;
    std::vector<double> log_q(grid.log_weights.size());
    std::vector<double> log_p(grid.log_weights.size());
    for (std::size_t k = 0; k < log_q.size(); ++k) {
      const double x = grid.nodes(static_cast<Eigen::Index>(k), 0);
      log_q[k] = -0.5 * std::log(2.0 * std::numbers::pi * start.var) - 0.5 * x * x / start.var;
      log_p[k] = p(std::span<const double>(&x, 1));
    }
    oracle::Gauss q = start;
    double worst = 0.0;
    int steps = 0;
    for (; steps < 100; ++steps) {
      const cmt::GridDual dual(grid.log_weights, log_q, log_p);
      const auto sol = cmt::solve_multipliers(dual, cfg);
      if (sol.multipliers.lambda <= cfg.tol) break;
      const auto next = dual.next_log_density(sol.multipliers);
      const double kl_grid = cmt::grid_kl(grid.log_weights, next, log_q);
      const oracle::Gauss q_next = oracle::step(q, target, sol.multipliers.lambda, 0.0);
      const double kl_exact = oracle::kl(q_next, q);
      worst = std::max({worst, std::abs(kl_grid / eps - 1.0), std::abs(kl_exact / eps - 1.0)});
      log_q = next;
      q = q_next;
    }
    v.detail << " eps=" << eps << " steps=" << steps << " max_rel_dev=" << fmt(worst);
    v.require(steps > 0 && steps < 100, "eps " + fmt(eps) + " did not terminate");
    v.require(worst <= 0.02, "eps " + fmt(eps) + " KL deviation " + fmt(worst));
  }
  return v;
}

double centered_max_deviation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs((a[k] - ma) - (b[k] - mb)));
  return worst;
}

void check_path(Verdict& v, const std::string& name, const cmt::RunResult& res) {
  const auto& ledger = res.ledger;
  const auto& e = ledger.entries();
  const cmt::LogDensity target = cmt::make_target(res.config.target);
  const cmt::MixtureModel q0 = res.models.front();
  const cmt::LogDensity q0_density(q0.dim(), [q0](std::span<const double> x) { return q0.log_prob(x); });

  const cmt::Points pts = q0.sample(100, 99);
  std::vector<cmt::LogDensity> iterated{q0_density};
  double worst = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    std::vector<double> a(100);
    std::vector<double> b(100);
    for (Eigen::Index k = 0; k < 100; ++k) {
      a[static_cast<std::size_t>(k)] = cmt::closed_form_log_density(ledger, q0_density, target, i, cmt::row_span(pts, k));
      b[static_cast<std::size_t>(k)] = iterated.back()(cmt::row_span(pts, k));
    }
    worst = std::max(worst, centered_max_deviation(a, b));
    if (i + 1 < e.size()) {
      iterated.push_back(cmt::next_intermediate(iterated.back(), target, e[i].multipliers, e[i].log_z_est).as_log_density());
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < e.size(); ++i) monotone = monotone && e[i].beta >= e[i - 1].beta;
  const double tol = res.config.loop.terminal_multiplier_tol;
  v.detail << " " << name << " dev=" << fmt(worst);
  v.require(worst <= 1e-9, name + " closed form vs iterated " + fmt(worst));
  v.require(monotone, name + " beta not monotone");
  v.require(e.front().beta == 0.0 && e.front().alpha == 0.0, name + " start exponents");
  v.require(res.converged, name + " not converged");
  v.require(std::abs(e.back().beta - 1.0) <= tol && std::abs(e.back().alpha - 1.0) <= tol, name + " terminal exponents");
}

// 3. Closed-form path density equals the iterated updates on recorded runs.
Verdict criterion3() {
  Verdict v;
  auto g = gauss1d_config(3);
  g.dual.eps_ent = 0.2;
  g.loop.buffer_size = 20000;
  check_path(v, "gauss1d", cmt::run(g, false));

  auto m = gmm_config(3, cmt::ScheduleMode::combined);
  m.loop.buffer_size = 20000;
  m.family.fit.em_max_iters = 30;
  check_path(v, "gmm_grid", cmt::run(m, false));

  cmt::RunConfig w;
  w.target.kind = cmt::TargetKind::many_well;
  w.target.dim = 2;
  w.family.k_comp = 4;
  w.family.init_entropy_scale = 3.0;
  w.family.init_jitter = 0.5;
  w.dual.eps_ent = 0.3;
  w.loop.buffer_size = 20000;
  w.loop.seed = 3;
  check_path(v, "many_well2", cmt::run(w, false));

  auto f = gauss1d_config(3);
  f.schedule_mode = cmt::ScheduleMode::fixed_linear;
  f.loop.max_steps = 10;
  f.loop.buffer_size = 20000;
  check_path(v, "fixed_linear", cmt::run(f, false));
  return v;
}

// 4. Single-constraint runs stay on their sub-paths; the combined dual reduces exactly.
Verdict criterion4() {
  Verdict v;
  auto tr = gmm_config(4, cmt::ScheduleMode::tr_only);
  tr.loop.buffer_size = 20000;
  tr.family.fit.em_max_iters = 30;
  const auto tr_res = cmt::run(tr, false);
  double alpha_dev = 0.0;
  for (std::size_t i = 1; i < tr_res.ledger.entries().size(); ++i) {
    alpha_dev = std::max(alpha_dev, std::abs(tr_res.ledger.entries()[i].alpha - 1.0));
  }

  auto ent = gauss1d_config(4);
  ent.schedule_mode = cmt::ScheduleMode::ent_only;
  ent.dual.eps_ent = 0.3;
  ent.loop.buffer_size = 20000;
  const auto ent_res = cmt::run(ent, false);
  double beta_dev = 0.0;
  for (std::size_t i = 1; i < ent_res.ledger.entries().size(); ++i) {
    beta_dev = std::max(beta_dev, std::abs(ent_res.ledger.entries()[i].beta - 1.0));
  }

  const auto model = cmt::initial_model(gmm_config(4, cmt::ScheduleMode::combined));
  const auto buf = cmt::draw_buffer(model, cmt::make_target(gmm_config(4, cmt::ScheduleMode::combined).target), 20000, 4);
  cmt::DualConfig cfg;
  double reduce_dev = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double lambda = std::pow(10.0, -3.0 + 0.35 * k);
    const double a = cmt::dual_tr_ent(buf, {lambda, 0.0}, cfg);
    const double b = cmt::dual_tr(buf, lambda, cfg);
    reduce_dev = std::max(reduce_dev, std::abs(a - b) / std::max(1.0, std::abs(b)));
  }
  v.detail << " tr_only max|alpha-1|=" << fmt(alpha_dev) << " (" << tr_res.steps.size() << " steps)"
           << " ent_only max|beta-1|=" << fmt(beta_dev) << " (" << ent_res.steps.size() << " steps)"
           << " reduction=" << fmt(reduce_dev);
  v.require(tr_res.steps.size() > 1 && alpha_dev <= 1e-12, "tr_only alpha");
  v.require(ent_res.steps.size() > 1 && beta_dev == 0.0, "ent_only beta");
  v.require(reduce_dev <= 4.0 * std::numeric_limits<double>::epsilon(), "dual reduction");
  return v;
}

// Largest excess of g over the chord through its neighbours along each axis.
double concavity_violation(const cmt::DualProblem& dual) {
  cmt::DualConfig cfg;
  constexpr int n = 30;
  std::vector<double> axis(n);
  for (int k = 0; k < n; ++k) axis[static_cast<std::size_t>(k)] = std::pow(10.0, -3.0 + 6.0 * k / (n - 1));
  std::vector<std::vector<double>> g(n, std::vector<double>(n));
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) g[a][b] = cmt::dual_value(dual, {axis[a], axis[b]}, cfg);
  }
  double worst = -INFINITY;
  const auto chord = [&](double x0, double x1, double x2, double g0, double g1, double g2) {
    const double t = (x1 - x0) / (x2 - x0);
    return g1 - ((1.0 - t) * g0 + t * g2);
  };
  // A concave function lies on or above its chords, so the excess below is a violation.
  for (int a = 0; a < n; ++a) {
    for (int b = 1; b + 1 < n; ++b) {
      worst = std::max(worst, -chord(axis[b - 1], axis[b], axis[b + 1], g[a][b - 1], g[a][b], g[a][b + 1]));
      worst = std::max(worst, -chord(axis[b - 1], axis[b], axis[b + 1], g[b - 1][a], g[b][a], g[b + 1][a]));
    }
  }
  return worst;
}

cmt::GridDual grid_dual(const cmt::TargetSpec& spec, const cmt::MixtureModel& q, std::size_t per_axis) {
  const auto box = cmt::quadrature_box(spec);
  cmt::Box wide = box;
  for (std::size_t k = 0; k < wide.dim(); ++k) {
    wide.lo[k] = std::min(wide.lo[k], -20.0);
    wide.hi[k] = std::max(wide.hi[k], 20.0);
  }
  const auto grid = cmt::make_grid(wide, per_axis);
  const cmt::LogDensity qd(q.dim(), [q](std::span<const double> x) { return q.log_prob(x); });
  return cmt::GridDual(grid, qd, cmt::make_target(spec));
}

// 5. Quadrature duals are concave along both multiplier axes.
Verdict criterion5() {
  Verdict v;
  cmt::TargetSpec g1;
  g1.mu = 1.0;
  g1.sigma = 0.5;
  g1.offset = 2.0;
  cmt::TargetSpec gmm;
  gmm.kind = cmt::TargetKind::gmm_grid;
  gmm.dim = 2;
  gmm.sigma = 0.3;
  cmt::TargetSpec mw;
  mw.kind = cmt::TargetKind::many_well;
  mw.dim = 2;
  const std::vector<std::tuple<std::string, cmt::TargetSpec, std::size_t>> cases{
      {"gauss1d", g1, 8000}, {"gmm_grid", gmm, 400}, {"many_well2", mw, 400}};
  for (const auto& [name, spec, n] : cases) {
    const auto q = cmt::MixtureModel::isotropic(spec.dim, 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim)),
                                                4.0, 0.0, 0);
    const double worst = concavity_violation(grid_dual(spec, q, n));
    v.detail << " " << name << " max_violation=" << fmt(worst);
    v.require(worst <= 1e-9, name + " concavity " + fmt(worst));
  }
  return v;
}

// 6. Combined mode covers all nine basins where the baselines do worse.
Verdict criterion6() {
  Verdict v;
  int tr_worse = 0;
  int linear_worse = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = cmt::run(gmm_offcenter_config(seed, cmt::ScheduleMode::combined), false).metrics;
    const auto t = cmt::run(gmm_offcenter_config(seed, cmt::ScheduleMode::tr_only), false).metrics;
    const auto l = cmt::run(gmm_offcenter_config(seed, cmt::ScheduleMode::fixed_linear), false).metrics;
    tr_worse += t.mode_mass_tv > c.mode_mass_tv ? 1 : 0;
    linear_worse += l.mode_mass_tv > c.mode_mass_tv ? 1 : 0;
    v.detail << " s" << seed << "(c=" << fmt(c.mode_mass_tv) << "/" << c.basins_populated << " tr=" << fmt(t.mode_mass_tv)
             << " lin=" << fmt(l.mode_mass_tv) << ")";
    v.require(c.mode_mass_tv <= 0.03, "seed " + std::to_string(seed) + " combined tv " + fmt(c.mode_mass_tv));
    v.require(c.basins_populated == 9, "seed " + std::to_string(seed) + " combined basins");
  }
  v.detail << " tr_only worse on " << tr_worse << "/5, fixed_linear worse on " << linear_worse << "/5";
  v.require(tr_worse >= 4, "tr_only ordering");
  v.require(linear_worse >= 4, "fixed_linear ordering");
  return v;
}

// 7. Evidence: log Ẑ recovers the offset; the EUBO-ELBO gap is small.
Verdict criterion7() {
  Verdict v;
  auto cfg = gauss1d_config(7);
  cfg.target.offset = 7.0;
  cfg.eval.model_samples = 1000000;
  cfg.eval.reference_samples = 1000000;
  const auto res = cmt::run(cfg, false);
  const auto& m = res.metrics;
  const double truth = cmt::true_log_z(cfg.target);
  const double gap = m.eubo.value - m.elbo;
  v.detail << " log_z_hat=" << fmt(m.log_z_hat) << " se=" << fmt(m.log_z_se) << " truth=" << fmt(truth)
           << " eubo-elbo=" << fmt(gap);
  v.require(std::abs(m.log_z_hat - truth) <= 3.0 * m.log_z_se, "log_z_hat outside 3 SE");
  v.require(gap < 0.05, "EUBO-ELBO gap");
  v.require(res.converged, "not converged");
  return v;
}

// 8. Entropy decrease respects ε_ent while η is active, and decays linearly there.
Verdict criterion8() {
  Verdict v;
  const auto cfg = funnel_config(8);
  const auto res = cmt::run(cfg, false);
  const double tol = cfg.loop.terminal_multiplier_tol;
  const double eps = cfg.dual.eps_ent;
  double worst_excess = -INFINITY;
  std::vector<double> xs;
  std::vector<double> hs;
  for (std::size_t i = 0; i + 1 < res.steps.size(); ++i) {
    const auto& s = res.steps[i];
    const auto& n = res.steps[i + 1];
    if (s.applied.eta <= tol) continue;
    const double se = std::sqrt(s.entropy_se * s.entropy_se + n.entropy_se * n.entropy_se);
    worst_excess = std::max(worst_excess, (s.entropy - n.entropy) - (eps + 3.0 * se));
    if (xs.empty() || xs.back() != static_cast<double>(i)) {
      xs.push_back(static_cast<double>(i));
      hs.push_back(s.entropy);
    }
    xs.push_back(static_cast<double>(i + 1));
    hs.push_back(n.entropy);
  }
  v.require(xs.size() >= 3, "entropy constraint active on fewer than two steps");
  double residual = 0.0;
  double decay = 0.0;
  if (xs.size() >= 3) {
    const double k = static_cast<double>(xs.size());
    double mx = 0.0;
    double mh = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      mx += xs[j] / k;
      mh += hs[j] / k;
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      sxy += (xs[j] - mx) * (hs[j] - mh);
      sxx += (xs[j] - mx) * (xs[j] - mx);
    }
    const double slope = sxy / sxx;
    for (std::size_t j = 0; j < xs.size(); ++j) residual = std::max(residual, std::abs(hs[j] - (mh + slope * (xs[j] - mx))));
    decay = hs.front() - hs.back();
  }
  v.detail << " active_points=" << xs.size() << " max_excess=" << fmt(worst_excess) << " linear_residual=" << fmt(residual)
           << " decay=" << fmt(decay);
  v.require(worst_excess <= 0.0, "entropy decrease exceeds bound");
  v.require(decay > 0.0 && residual < 0.1 * decay, "entropy trace not linear");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Identical config and seed give byte-identical telemetry.
Verdict criterion9() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "cmt_acceptance_determinism";
  fs::remove_all(root);
  auto g = gauss1d_config(9);
  g.loop.buffer_size = 50000;
  g.dual.eps_ent = 0.2;
  auto m = gmm_config(9, cmt::ScheduleMode::combined);
  m.loop.buffer_size = 20000;
  m.family.fit.em_max_iters = 30;
  for (auto [name, cfg] : std::vector<std::pair<std::string, cmt::RunConfig>>{{"gauss1d", g}, {"gmm_grid", m}}) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      cfg.output.run_dir = (root / (name + std::to_string(rep))).string();
      (void)cmt::run(cfg);
      const std::string t = slurp(fs::path(cfg.output.run_dir) / "telemetry.jsonl");
      if (rep == 0) {
        first = t;
      } else {
        v.require(!t.empty() && t == first, name + " telemetry differs");
      }
    }
    v.detail << " " << name << " bytes=" << first.size();
  }
  fs::remove_all(root);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  std::vector<int> which;
  for (int a = 1; a < argc; ++a) which.push_back(std::stoi(argv[a]));
  if (which.empty()) {
    for (int k = 1; k <= 9; ++k) which.push_back(k);
  }
  bool all = true;
  for (const int k : which) {
    if (k < 1 || k > 9) {
      std::cerr << "unknown criterion " << k << "\n";
      return 1;
    }
    Verdict v;
    try {
      v = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [error: " << e.what() << "]";
    }
    std::cout << "criterion " << k << ": " << (v.pass ? "PASS" : "FAIL") << v.detail.str() << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
