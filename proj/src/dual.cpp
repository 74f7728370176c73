#include "cmt/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>

namespace cmt {

void DualConfig::validate() const {
  if (tr_enabled && !(eps_tr > 0.0)) throw ContractViolation("DualConfig: eps_tr must be > 0");
  if (ent_enabled && !(eps_ent > 0.0)) throw ContractViolation("DualConfig: eps_ent must be > 0");
  if (!(multiplier_max > 0.0) || !std::isfinite(multiplier_max)) {
    throw ContractViolation("DualConfig: multiplier_max must be positive and finite");
  }
  if (!(init_guess > 0.0 && init_guess < multiplier_max)) {
    throw ContractViolation("DualConfig: init_guess must lie in (0, multiplier_max)");
  }
  if (!(tol > 0.0)) throw ContractViolation("DualConfig: tol must be > 0");
  if (max_rounds < 1) throw ContractViolation("DualConfig: max_rounds must be >= 1");
}

BufferDual::BufferDual(const WeightedBuffer& buffer) : buffer_(buffer), entropy_(entropy_estimate(buffer)) {}

double BufferDual::log_z(MultiplierPair mult) const { return log_z_estimate(buffer_, mult); }

double log_z_estimate(const WeightedBuffer& buffer, MultiplierPair mult) {
  mult.validate(std::numeric_limits<double>::max());
  const auto& lq = buffer.log_q();
  const auto& lp = buffer.log_p();
  const double inv_s = 1.0 / (1.0 + mult.lambda + mult.eta);
  const double a = 1.0 + mult.eta;
  const std::size_t n = lq.size();

  double max = kNegInf;
  for (std::size_t k = 0; k < n; ++k) max = std::max(max, (lp[k] - a * lq[k]) * inv_s);
  if (max == kNegInf) throw DegenerateBuffer();
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) sum += std::exp((lp[k] - a * lq[k]) * inv_s - max);
  return max + std::log(sum) - std::log(static_cast<double>(n));
}

double dual_value(const DualProblem& problem, MultiplierPair mult, const DualConfig& cfg) {
  if (!cfg.tr_enabled) mult.lambda = 0.0;
  if (!cfg.ent_enabled) mult.eta = 0.0;
  const double s = 1.0 + mult.lambda + mult.eta;
  double value = -s * problem.log_z(mult);
  if (cfg.tr_enabled) value -= mult.lambda * cfg.eps_tr;
  if (cfg.ent_enabled) value += mult.eta * (problem.base_entropy() - cfg.eps_ent);
  return value;
}

double dual_tr(const WeightedBuffer& buffer, double lambda, const DualConfig& cfg) {
  if (!(lambda >= 0.0)) throw ContractViolation("dual_tr: lambda must be >= 0");
  return -(1.0 + lambda) * log_z_estimate(buffer, {lambda, 0.0}) - lambda * cfg.eps_tr;
}

double dual_tr_ent(const WeightedBuffer& buffer, MultiplierPair mult, const DualConfig& cfg) {
  mult.validate(cfg.multiplier_max);
  const double s = 1.0 + mult.lambda + mult.eta;
  return -s * log_z_estimate(buffer, mult) - mult.lambda * cfg.eps_tr +
         mult.eta * (entropy_estimate(buffer) - cfg.eps_ent);
}

double maximize_scalar(const std::function<double(double)>& f, double lo, double hi, double tol) {
  if (!(lo < hi)) throw ContractViolation("maximize_scalar: require lo < hi");
  if (!(tol > 0.0)) throw ContractViolation("maximize_scalar: tol must be > 0");

  const auto probe = [&f](double x) {
    const double v = f(x);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os.precision(17);
      os << "maximize_scalar: objective is " << v << " at x = " << x;
      throw NumericalError(os.str());
    }
    return v;
  };

  const int digits = std::numeric_limits<double>::digits;
  const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(tol))) + 4, 8, digits);
  std::uintmax_t max_iter = 500;
  const auto [x_brent, neg_f_brent] =
      boost::math::tools::brent_find_minima([&probe](double x) { return -probe(x); }, lo, hi, bits, max_iter);

  // Brent never evaluates the bracket ends; concave duals often peak exactly there.
  double best_x = lo;
  double best_f = probe(lo);
  if (-neg_f_brent > best_f) {
    best_x = x_brent;
    best_f = -neg_f_brent;
  }
  if (const double f_hi = probe(hi); f_hi > best_f) best_x = hi;
  return best_x;
}

namespace {

double to_u(double m) { return std::log1p(m); }
double from_u(double u) { return std::expm1(u); }

}  // namespace

MultiplierSolution solve_multipliers(const DualProblem& problem, const DualConfig& cfg) {
  cfg.validate();
  if (!cfg.tr_enabled && !cfg.ent_enabled) {
    throw ContractViolation("solve_multipliers: at least one constraint must be enabled");
  }
  const double u_max = to_u(cfg.multiplier_max);
  const auto clamp_m = [&cfg](double m) { return std::clamp(m, 0.0, cfg.multiplier_max); };

  MultiplierSolution sol;
  if (cfg.tr_enabled && !cfg.ent_enabled) {
    const double u = maximize_scalar([&](double v) { return dual_value(problem, {from_u(v), 0.0}, cfg); }, 0.0,
                                     u_max, cfg.tol);
    sol.multipliers = {clamp_m(from_u(u)), 0.0};
    sol.rounds = 1;
    return sol;
  }
  if (!cfg.tr_enabled) {
    const double u = maximize_scalar([&](double v) { return dual_value(problem, {0.0, from_u(v)}, cfg); }, 0.0,
                                     u_max, cfg.tol);
    sol.multipliers = {0.0, clamp_m(from_u(u))};
    sol.rounds = 1;
    return sol;
  }

  const auto g = [&](double ul, double ue) {
    return dual_value(problem, {from_u(std::clamp(ul, 0.0, u_max)), from_u(std::clamp(ue, 0.0, u_max))}, cfg);
  };
  double u_lambda = to_u(cfg.init_guess);
  double u_eta = to_u(cfg.init_guess);
  sol.converged = false;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    const double g_start = g(u_lambda, u_eta);
    const double eta = from_u(u_eta);
    const double next_u_lambda = maximize_scalar(
        [&](double v) { return dual_value(problem, {from_u(v), eta}, cfg); }, 0.0, u_max, cfg.tol);
    const double lambda = from_u(next_u_lambda);
    const double next_u_eta = maximize_scalar(
        [&](double v) { return dual_value(problem, {lambda, from_u(v)}, cfg); }, 0.0, u_max, cfg.tol);
    const double d_lambda = next_u_lambda - u_lambda;
    const double d_eta = next_u_eta - u_eta;
    u_lambda = next_u_lambda;
    u_eta = next_u_eta;
    // Function values locate a maximum only to about sqrt(eps), so a round
    // that gains nothing beyond round-off is stationary in both coordinates
    // even when the arguments still jitter above tol.
    const double g_end = g(u_lambda, u_eta);
    const double resolution = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(g_end));
    const bool settled =
        (std::abs(d_lambda) < cfg.tol && std::abs(d_eta) < cfg.tol) || (round > 1 && g_end - g_start <= resolution);
    sol.rounds = round;
    if (settled) {
      sol.converged = true;
      break;
    }
    // Coupled multipliers make plain alternation zig-zag; extrapolate along the
    // round's net move (a pattern step) before the next round.
    double t_max = 1e3;
    if (d_lambda > 0.0) t_max = std::min(t_max, (u_max - u_lambda) / d_lambda);
    if (d_lambda < 0.0) t_max = std::min(t_max, -u_lambda / d_lambda);
    if (d_eta > 0.0) t_max = std::min(t_max, (u_max - u_eta) / d_eta);
    if (d_eta < 0.0) t_max = std::min(t_max, -u_eta / d_eta);
    if (t_max > 0.0) {
      const double t = maximize_scalar([&](double v) { return g(u_lambda + v * d_lambda, u_eta + v * d_eta); },
                                       0.0, t_max, cfg.tol);
      u_lambda = std::clamp(u_lambda + t * d_lambda, 0.0, u_max);
      u_eta = std::clamp(u_eta + t * d_eta, 0.0, u_max);
    }
  }
  sol.multipliers = {clamp_m(from_u(u_lambda)), clamp_m(from_u(u_eta))};
  return sol;
}

MultiplierSolution solve_multipliers(const WeightedBuffer& buffer, const DualConfig& cfg) {
  return solve_multipliers(BufferDual(buffer), cfg);
}

RealizedConstraints realized_constraints(const WeightedBuffer& buffer, MultiplierPair mult) {
  const auto& lq = buffer.log_q();
  const auto& lp = buffer.log_p();
  const std::size_t n = lq.size();
  const double inv_s = 1.0 / (1.0 + mult.lambda + mult.eta);
  std::vector<double> log_w(n);
  for (std::size_t k = 0; k < n; ++k) log_w[k] = (lp[k] - (1.0 + mult.eta) * lq[k]) * inv_s;
  const double lse = log_sum_exp(log_w);
  if (lse == kNegInf) throw DegenerateBuffer();
  const double log_n = std::log(static_cast<double>(n));

  RealizedConstraints out;
  double weighted_log_q = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double lw = log_w[k] - lse;
    if (lw == kNegInf) continue;
    const double w = std::exp(lw);
    out.kl += w * (lw + log_n);
    weighted_log_q += w * lq[k];
  }
  out.entropy_next = -weighted_log_q - out.kl;
  return out;
}

}  // namespace cmt
