#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cmt/core.hpp"
#include "cmt/dual.hpp"

namespace cmt {

/// Axis-aligned box in 1 or 2 dimensions.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const noexcept { return lo.size(); }
};

/// Tensor-product midpoint grid: nodes plus log of each node's cell volume.
struct TensorGrid {
  Points nodes;
  std::vector<double> log_weights;
  std::size_t per_axis = 0;
};

/// n_per_axis cells per axis of the box; supports dim 1 and 2.
TensorGrid make_grid(const Box& box, std::size_t n_per_axis);

/// log ∫_box exp(f) on the midpoint grid.
double grid_log_integral(const LogDensity& f, const Box& box, std::size_t n_per_axis);

struct QuadratureResult {
  double value = 0.0;
  std::size_t per_axis = 0;
  std::vector<double> trace;  ///< value at each refinement level
};

/// Doubles the resolution until two successive levels differ by less than tol.
/// Throws NumericalError carrying the refinement trace when max_levels is exhausted.
QuadratureResult refine_log_integral(const LogDensity& f, const Box& box, std::size_t n0, double tol,
                                     int max_levels = 8);

/// Dual whose normalizer and base entropy come from quadrature of the exact
/// densities on a grid instead of from samples.
class GridDual final : public DualProblem {
 public:
  /// log_q must be normalized on the grid (it is renormalized defensively to the grid sum).
  GridDual(std::vector<double> log_weights, std::vector<double> log_q, std::vector<double> log_p);
  GridDual(const TensorGrid& grid, const LogDensity& q, const LogDensity& target);

  double log_z(MultiplierPair mult) const override;
  double base_entropy() const override { return entropy_; }

  /// Normalized log-density of q_{i+1} on the grid nodes.
  std::vector<double> next_log_density(MultiplierPair mult) const;

 private:
  std::vector<double> log_w_;
  std::vector<double> log_q_;
  std::vector<double> log_p_;
  double entropy_ = 0.0;
};

/// KL(a || b) for log-densities tabulated on the same grid.
double grid_kl(std::span<const double> log_weights, std::span<const double> log_a, std::span<const double> log_b);

}  // namespace cmt
