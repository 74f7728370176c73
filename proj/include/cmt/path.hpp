#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmt/core.hpp"

namespace cmt {

/// Closed-form optimum of one constrained step:
///   log q_{i+1}(x) = (λ log q_i(x) + log p̃(x)) / (1+λ+η) - log Z_{i+1}.
/// η = 0 gives the trust-region update, λ = 0 the tempered entropy update.
class IntermediateDensity {
 public:
  IntermediateDensity(LogDensity base, LogDensity target, MultiplierPair mult, double log_z);

  std::size_t dim() const noexcept { return base_.dim(); }
  double operator()(std::span<const double> x) const;
  const MultiplierPair& multipliers() const noexcept { return mult_; }
  double log_z() const noexcept { return log_z_; }

  /// Handle usable as the base of the next update.
  LogDensity as_log_density() const;

 private:
  LogDensity base_;
  LogDensity target_;
  MultiplierPair mult_;
  double log_z_;
};

IntermediateDensity next_intermediate(const LogDensity& base, const LogDensity& target, MultiplierPair mult,
                                      double log_z);

/// Append-only record of the annealing path. Entry i carries (β_i, α_i) of q_i
/// and the quantities solved at step i. The exponents follow
///   β_{i+1} = 1 - (1-β_i) λ_i/(1+λ_i+η_i)
///   α_{i+1}β_{i+1} = α_i β_i λ_i/(1+λ_i+η_i) + 1/(1+λ_i+η_i)
/// so q_i ∝ q_0^{1-β_i} p̃^{α_i β_i}.
class PathLedger {
 public:
  explicit PathLedger(bool closed_form_enabled = true);

  const std::vector<PathState>& entries() const noexcept { return entries_; }
  const PathState& back() const { return entries_.back(); }
  std::size_t last_index() const noexcept { return entries_.size() - 1; }
  bool closed_form_enabled() const noexcept { return closed_form_enabled_; }

  /// Exponent of p̃ in the closed form, α_i β_i (kept directly to avoid 0/0 at β = 0).
  double target_exponent(std::size_t i) const { return alpha_beta_.at(i); }
  /// Exponent of q_0, 1 - β_i.
  double base_exponent(std::size_t i) const { return one_minus_beta_.at(i); }

  /// Records step-i results on the last entry and appends entry i+1.
  /// Throws InvariantViolation if β would decrease by more than 1e-12.
  void append(MultiplierPair mult, double entropy_est, double log_z, double step_ess);

  /// Same, for schedules that fix β_{i+1} directly on a geometric path (α = 1).
  /// The recorded multipliers are the implied trust-region values.
  void append_scheduled(double next_beta, double entropy_est, double log_z, double step_ess);

 private:
  void push_next(double one_minus_beta, double alpha_beta);

  std::vector<PathState> entries_;
  std::vector<double> one_minus_beta_;
  std::vector<double> alpha_beta_;
  bool closed_form_enabled_;
};

PathLedger update_ledger(PathLedger ledger, MultiplierPair mult, double entropy_est, double log_z, double step_ess);

/// (1-β_i) log q_0(x) + α_i β_i log p̃(x), the unnormalized
/// closed form of the i-th intermediate density.
double closed_form_log_density(const PathLedger& ledger, const LogDensity& q0, const LogDensity& target,
                               std::size_t i, std::span<const double> x);

}  // namespace cmt
