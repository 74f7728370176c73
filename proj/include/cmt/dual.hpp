#pragma once

#include <functional>
#include <vector>

#include "cmt/core.hpp"

namespace cmt {

struct DualConfig {
  double eps_tr = 0.3;   ///< trust-region bound on KL(q_{i+1} || q_i), nats
  double eps_ent = 1.0;  ///< bound on the per-step entropy decrease, nats
  bool tr_enabled = true;
  bool ent_enabled = true;
  double multiplier_max = kMultiplierMax;
  double init_guess = 1e-20;
  double tol = 1e-8;  ///< convergence tolerance in log1p(multiplier) coordinates
  int max_rounds = 50;

  void validate() const;
};

/// Source of the step's intermediate normalizer Z_{i+1}(λ, η) and of H(q_i).
/// The Monte Carlo buffer and the quadrature grid are the two implementations.
class DualProblem {
 public:
  virtual ~DualProblem() = default;
  virtual double log_z(MultiplierPair mult) const = 0;
  virtual double base_entropy() const = 0;
};

/// Monte Carlo dual built from one annealing step's buffer.
class BufferDual final : public DualProblem {
 public:
  explicit BufferDual(const WeightedBuffer& buffer);

  double log_z(MultiplierPair mult) const override;
  double base_entropy() const override { return entropy_; }

 private:
  const WeightedBuffer& buffer_;
  double entropy_;
};

/// log of (1/N) Σ exp((log_p - (1+η) log_q) / (1+λ+η)).
/// Throws DegenerateBuffer when every summand is zero.
double log_z_estimate(const WeightedBuffer& buffer, MultiplierPair mult);

/// g(λ, η) = -(1+λ+η) log Z(λ, η) - λ ε_tr + η (H(q_i) - ε_ent), with disabled
/// constraints contributing neither multiplier nor bound.
double dual_value(const DualProblem& problem, MultiplierPair mult, const DualConfig& cfg);

/// Trust-region dual -(1+λ) log Z(λ) - λ ε_tr.
double dual_tr(const WeightedBuffer& buffer, double lambda, const DualConfig& cfg);

/// Combined dual with H(q_i) replaced by the buffer's Monte Carlo entropy.
double dual_tr_ent(const WeightedBuffer& buffer, MultiplierPair mult, const DualConfig& cfg);

/// Bounded derivative-free maximizer (Brent's method plus endpoint probes, so
/// boundary optima are returned exactly). Throws NumericalError if f is
/// non-finite at any probe.
double maximize_scalar(const std::function<double(double)>& f, double lo, double hi, double tol);

struct MultiplierSolution {
  MultiplierPair multipliers;
  int rounds = 0;         ///< coordinate-ascent rounds (1 for single-constraint solves)
  bool converged = true;  ///< false when the round cap was hit
};

/// argmax of the dual over [0, multiplier_max]^k for the enabled constraints.
/// Two constraints are solved by alternating bounded scalar maximizations in
/// u = log1p(multiplier).
MultiplierSolution solve_multipliers(const DualProblem& problem, const DualConfig& cfg);
MultiplierSolution solve_multipliers(const WeightedBuffer& buffer, const DualConfig& cfg);

/// Constraint values realized by the reweighted buffer at the given multipliers:
/// the KL(q_{i+1} || q_i) estimate Σ w log(N w) and the entropy estimate of q_{i+1}.
struct RealizedConstraints {
  double kl = 0.0;
  double entropy_next = 0.0;
};
RealizedConstraints realized_constraints(const WeightedBuffer& buffer, MultiplierPair mult);

}  // namespace cmt
