#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cmt/core.hpp"
#include "json.hpp"

namespace cmt {

/// Finite Gaussian mixture: the default approximation family.
///
/// Value type; every refit returns a new model. Construction validates the
/// simplex weights and factorizes each covariance (throws ContractViolation if
/// one is not symmetric positive definite).
class MixtureModel {
 public:
  MixtureModel(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
               std::vector<Eigen::MatrixXd> covariances);

  /// k copies of N(mean, scale^2 I) whose means are jittered by jitter*scale
  /// standard normal offsets. With small jitter the mixture is close to the
  /// single broad Gaussian but EM can break the symmetry.
  static MixtureModel isotropic(std::size_t dim, std::size_t k, const Eigen::VectorXd& mean, double scale,
                                double jitter, std::uint64_t seed);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_components() const noexcept { return weights_.size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const noexcept { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const noexcept { return covariances_; }

  double log_prob(std::span<const double> x) const;
  std::vector<double> log_prob_rows(const Points& points) const;

  /// N x K matrix of log(w_k N(x_n; μ_k, Σ_k)).
  Eigen::MatrixXd component_log_terms(const Points& points) const;

  /// Ancestral sampling: component index, then Gaussian draw. Deterministic in seed.
  Points sample(std::size_t n, std::uint64_t seed) const;

  /// Smallest covariance eigenvalue across components.
  double min_covariance_eigenvalue() const;

  nlohmann::json to_json() const;
  static MixtureModel from_json(const nlohmann::json& j);

 private:
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  // Per component: lower Cholesky factor (row-major) and log(w_k) - d/2 log 2π - log|L|.
  std::vector<std::vector<double>> chol_;
  std::vector<double> log_norm_;
};

struct FitConfig {
  double var_floor = 1e-6;           ///< lower bound on covariance eigenvalues
  double weight_floor = 1e-8;        ///< lower bound on mixture weights
  double em_tol = 1e-6;              ///< stop when the relative log-likelihood gain falls below
  int em_max_iters = 100;
  double component_floor = 1e-6;     ///< effective mass below which a component is reset
  double reset_scale = 0.25;         ///< reset covariance as a fraction of the weighted buffer covariance

  void validate() const;
};

struct FitReport {
  int em_iterations = 0;
  std::vector<double> weighted_loglik_trace;  ///< Σ w_n log q(x_n), entry 0 is the starting model
  double effective_weight_count = 0.0;        ///< 1 / Σ w_n^2
  int degenerate_components_reset = 0;
};

struct FitResult {
  MixtureModel model;
  FitReport report;
};

/// log(q_{i+1}(x_n) / q_i(x_n)) = (log_p - (1+η) log_q)/(1+λ+η) - log_z.
std::vector<double> log_importance_ratios(const WeightedBuffer& buffer, MultiplierPair mult, double log_z);

/// Self-normalized importance weights for fitting q_{i+1} from a q_i buffer.
/// Throws DegenerateBuffer when all weights vanish.
std::vector<double> importance_weights(const WeightedBuffer& buffer, MultiplierPair mult, double log_z);

/// Weighted EM warm-started from model, maximizing Σ w_n log q(x_n); this is the
/// importance-weighted forward-KL fit within the mixture family. Components whose
/// effective mass drops below component_floor are first re-seeded at a buffer point
/// drawn by weight, which is counted in the report. The trace is non-decreasing.
FitResult weighted_fit(const MixtureModel& model, const WeightedBuffer& buffer, std::span<const double> weights,
                       const FitConfig& cfg, std::uint64_t seed = 0);

}  // namespace cmt
