#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmt/core.hpp"
#include "cmt/mixture.hpp"
#include "cmt/targets.hpp"

namespace cmt {

/// Number of top weights clipped for reverse ESS: max(1, floor(N / 10^4)).
std::size_t clip_count(std::size_t n);

/// (Σw)^2 / (N Σw^2) of exp(log_weights), invariant to rescaling. With clip set,
/// the clip_count(N) largest weights are set to the smallest among them first.
/// Throws ContractViolation on empty input or when every weight is zero.
double ess_fraction(std::span<const double> log_weights, bool clip = false);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct EuboEstimate {
  double value = 0.0;  ///< +inf when the model assigns zero density to a reference point
  double std_error = 0.0;
  std::vector<std::size_t> offending;  ///< reference rows with log q = -inf
};

/// Mean of log p̃ - log q over reference points drawn from the normalized target.
EuboEstimate eubo_estimate(const Points& reference, const MixtureModel& model, const LogDensity& target);

struct EvidenceEstimate {
  double elbo = 0.0;
  double elbo_se = 0.0;
  double elbo_clipped = 0.0;  ///< lowest 0.01% of log-weights raised to the smallest kept value
  double log_z_hat = 0.0;
  double log_z_se = 0.0;  ///< delta-method standard error
};

/// ELBO and the importance-sampling evidence estimate from a model buffer.
EvidenceEstimate elbo_and_logz(const WeightedBuffer& buffer);

/// Half L1 distance between two probability vectors.
double total_variation(std::span<const double> a, std::span<const double> b);

/// Empirical basin masses of the sample set.
std::vector<double> empirical_mode_masses(const Points& samples, const TargetSpec& spec);

/// TV between empirical basin masses and the reference masses.
double mode_mass_tv(const Points& samples, const TargetSpec& spec, const ReferenceStats& reference);

/// TV between the empirical histogram (including the outside cell) and the reference.
double histogram_tv(const Points& samples, const ReferenceStats& reference);

struct RunMetrics {
  double ess_reverse_frac = 0.0;
  Estimate eubo;
  std::vector<std::size_t> eubo_offending;
  double elbo = 0.0;
  double elbo_se = 0.0;
  double elbo_clipped = 0.0;
  double log_z_hat = 0.0;
  double log_z_se = 0.0;
  double true_log_z = 0.0;
  double mode_mass_tv = 0.0;
  double hist2d_tv = 0.0;
  std::size_t basins_populated = 0;
  std::size_t n_basins = 0;
  std::vector<PathState> per_step;
  bool converged = false;
  std::size_t steps = 0;
};

}  // namespace cmt
