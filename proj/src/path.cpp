#include "cmt/path.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmt {

IntermediateDensity::IntermediateDensity(LogDensity base, LogDensity target, MultiplierPair mult, double log_z)
    : base_(std::move(base)), target_(std::move(target)), mult_(mult), log_z_(log_z) {
  if (base_.dim() != target_.dim()) throw ContractViolation("next_intermediate: base/target dimension mismatch");
  mult_.validate();
  if (!std::isfinite(log_z_)) throw ContractViolation("next_intermediate: log_z must be finite");
}

double IntermediateDensity::operator()(std::span<const double> x) const {
  const double s = 1.0 + mult_.lambda + mult_.eta;
  const double lp = target_(x);
  if (mult_.lambda == 0.0) return lp / s - log_z_;
  const double lq = base_(x);
  if (lq == kNegInf || lp == kNegInf) return kNegInf;
  return (mult_.lambda * lq + lp) / s - log_z_;
}

LogDensity IntermediateDensity::as_log_density() const {
  return LogDensity(dim(), [self = *this](std::span<const double> x) { return self(x); });
}

IntermediateDensity next_intermediate(const LogDensity& base, const LogDensity& target, MultiplierPair mult,
                                      double log_z) {
  return IntermediateDensity(base, target, mult, log_z);
}

PathLedger::PathLedger(bool closed_form_enabled) : closed_form_enabled_(closed_form_enabled) {
  entries_.push_back(PathState{});
  one_minus_beta_.push_back(1.0);
  alpha_beta_.push_back(0.0);
}

void PathLedger::push_next(double one_minus_beta, double alpha_beta) {
  const double beta_prev = entries_.back().beta;
  const double beta = 1.0 - one_minus_beta;
  if (beta < beta_prev - 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "annealing path: beta decreased from " << beta_prev << " to " << beta << " at step " << entries_.size();
    throw InvariantViolation(os.str());
  }
  PathState next;
  next.step_index = entries_.size();
  next.beta = beta;
  next.alpha = beta > 0.0 ? std::min(1.0, alpha_beta / beta) : 0.0;
  entries_.push_back(next);
  one_minus_beta_.push_back(one_minus_beta);
  alpha_beta_.push_back(alpha_beta);
}

void PathLedger::append(MultiplierPair mult, double entropy_est, double log_z, double step_ess) {
  mult.validate();
  auto& cur = entries_.back();
  cur.multipliers = mult;
  cur.entropy_est = entropy_est;
  cur.log_z_est = log_z;
  cur.step_ess_frac = step_ess;

  const double s = 1.0 + mult.lambda + mult.eta;
  const double keep = mult.lambda / s;
  push_next(one_minus_beta_.back() * keep, alpha_beta_.back() * keep + 1.0 / s);
}

void PathLedger::append_scheduled(double next_beta, double entropy_est, double log_z, double step_ess) {
  const double beta = entries_.back().beta;
  if (!(next_beta > beta && next_beta <= 1.0)) {
    throw InvariantViolation("annealing path: scheduled beta must increase within (beta_i, 1]");
  }
  // Geometric step q_{i+1} ∝ q_i^{1-b} p̃^b with b = (β_{i+1}-β_i)/(1-β_i), i.e. λ = (1-b)/b.
  const double b = (next_beta - beta) / (1.0 - beta);
  auto& cur = entries_.back();
  cur.multipliers = {(1.0 - b) / b, 0.0};
  cur.entropy_est = entropy_est;
  cur.log_z_est = log_z;
  cur.step_ess_frac = step_ess;
  push_next(1.0 - next_beta, next_beta);
  entries_.back().beta = next_beta;
}

PathLedger update_ledger(PathLedger ledger, MultiplierPair mult, double entropy_est, double log_z, double step_ess) {
  ledger.append(mult, entropy_est, log_z, step_ess);
  return ledger;
}

double closed_form_log_density(const PathLedger& ledger, const LogDensity& q0, const LogDensity& target,
                               std::size_t i, std::span<const double> x) {
  if (!ledger.closed_form_enabled()) throw ContractViolation("closed_form_log_density: closed form disabled");
  if (i > ledger.last_index()) {
    throw ContractViolation("closed_form_log_density: step " + std::to_string(i) + " out of range");
  }
  const double wq = ledger.base_exponent(i);
  const double wp = ledger.target_exponent(i);
  double out = 0.0;
  if (wq != 0.0) out += wq * q0(x);
  if (wp != 0.0) out += wp * target(x);
  return out;
}

}  // namespace cmt
