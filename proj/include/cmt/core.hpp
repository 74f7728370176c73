#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cmt/error.hpp"

namespace cmt {

/// Row-major sample matrix, one point per row, so each row is a contiguous span.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Upper bound for both Lagrangian multipliers.
inline constexpr double kMultiplierMax = 1e10;

inline std::span<const double> row_span(const Points& points, Eigen::Index row) {
  return {points.data() + row * points.cols(), static_cast<std::size_t>(points.cols())};
}

/// log(sum(exp(values))). Exact for the maximal term; all -inf gives -inf.
/// Throws ContractViolation on empty input.
double log_sum_exp(std::span<const double> values);

/// log(mean(exp(values))).
double log_mean_exp(std::span<const double> values);

/// Pointwise-evaluable unnormalized log-density on R^dim.
///
/// Evaluation is deterministic and returns either a finite value or -inf.
class LogDensity {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  LogDensity(std::size_t dim, Fn fn);

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::span<const double> x) const { return fn_(x); }

 private:
  std::size_t dim_;
  Fn fn_;
};

/// Anything we can draw from and evaluate exactly (the approximation family).
template <class Model>
concept SampleableDensity = requires(const Model& m, std::span<const double> x, std::size_t n, std::uint64_t seed) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.log_prob(x) } -> std::convertible_to<double>;
  { m.sample(n, seed) } -> std::same_as<Points>;
};

/// Samples of one annealing step together with the raw log-densities at them.
/// Weights are never stored; they depend on multipliers solved afterwards.
class WeightedBuffer {
 public:
  /// Validates shapes and that every log_q entry is finite.
  WeightedBuffer(Points points, std::vector<double> log_q, std::vector<double> log_p, std::uint64_t rng_seed = 0);

  std::size_t size() const noexcept { return log_q_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  const Points& points() const noexcept { return points_; }
  std::span<const double> point(std::size_t n) const { return row_span(points_, static_cast<Eigen::Index>(n)); }
  const std::vector<double>& log_q() const noexcept { return log_q_; }
  const std::vector<double>& log_p() const noexcept { return log_p_; }
  std::uint64_t rng_seed() const noexcept { return rng_seed_; }

 private:
  Points points_;
  std::vector<double> log_q_;
  std::vector<double> log_p_;
  std::uint64_t rng_seed_;
};

struct MultiplierPair {
  double lambda = 0.0;  ///< trust-region multiplier
  double eta = 0.0;     ///< entropy multiplier

  /// Both multipliers in [0, max]; throws ContractViolation otherwise.
  void validate(double max = kMultiplierMax) const;
  bool operator==(const MultiplierPair&) const = default;
};

/// One row of the annealing record. beta/alpha describe q_i; the multipliers,
/// entropy and normalizer are the ones solved at step i to produce q_{i+1}.
struct PathState {
  std::size_t step_index = 0;
  double beta = 0.0;
  double alpha = 0.0;
  MultiplierPair multipliers;
  double entropy_est = 0.0;
  double log_z_est = 0.0;
  double step_ess_frac = 1.0;
};

namespace detail {
WeightedBuffer finish_buffer(Points points, std::vector<double> log_q, const LogDensity& target, std::uint64_t seed);
}

/// Draws n points from model and caches log q(x_n) and log p̃(x_n).
/// Throws NumericalError naming the point if the target returns NaN or +inf.
template <SampleableDensity Model>
WeightedBuffer draw_buffer(const Model& model, const LogDensity& target, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractViolation("draw_buffer: n must be >= 1");
  if (model.dim() != target.dim()) throw ContractViolation("draw_buffer: model/target dimension mismatch");
  Points points = model.sample(n, seed);
  std::vector<double> log_q;
  if constexpr (requires { { model.log_prob_rows(points) } -> std::same_as<std::vector<double>>; }) {
    log_q = model.log_prob_rows(points);
  } else {
    log_q.resize(n);
    for (std::size_t k = 0; k < n; ++k) log_q[k] = model.log_prob(row_span(points, static_cast<Eigen::Index>(k)));
  }
  return detail::finish_buffer(std::move(points), std::move(log_q), target, seed);
}

/// Monte Carlo entropy -(1/N) sum log_q, unbiased for H(q) when the buffer was drawn from q.
double entropy_estimate(const WeightedBuffer& buffer);

/// Standard error of entropy_estimate (sample std of log_q over sqrt N).
double entropy_standard_error(const WeightedBuffer& buffer);

}  // namespace cmt
