#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cmt/core.hpp"
#include "cmt/quadrature.hpp"

namespace cmt {

enum class TargetKind { gauss1d, gmm_grid, many_well, funnel };

TargetKind parse_target_kind(const std::string& name);
std::string to_string(TargetKind kind);

/// Analytic benchmark target. Every log-density carries the additive offset c,
/// so log Z = c + (the normalized family's own log-normalizer, 0 unless noted).
///
///   gauss1d:   c + log N(x; mu, sigma^2)                                (dim 1)
///   gmm_grid:  c + log (1/M) Σ_m N(x; m_m, sigma^2 I), M = grid_size^dim
///              centers on a grid_size^dim lattice with the given spacing (dim 1 or 2)
///   many_well: c - Σ_k [(x_k^2 - a)^2 / b + confinement x_k^2 / 2]    (separable, 2^dim wells)
///   funnel:    c + log N(x_1; 0, funnel_scale^2) + Σ_{k>1} log N(x_k; 0, exp(x_1))
struct TargetSpec {
  TargetKind kind = TargetKind::gauss1d;
  std::size_t dim = 1;
  double mu = 0.0;
  double sigma = 1.0;
  double offset = 0.0;
  std::size_t grid_size = 3;
  double spacing = 4.0;
  double a = 2.0;
  double b = 4.0;
  double confinement = 0.1;
  double funnel_scale = 3.0;

  void validate() const;
};

LogDensity make_target(const TargetSpec& spec);

/// Exact log Z: analytic for gauss1d, gmm_grid and funnel; 1D adaptive
/// quadrature raised to the dim-th power for the separable many_well.
double true_log_z(const TargetSpec& spec);

/// Mode centers; basins are the Voronoi cells of these points.
std::vector<Eigen::VectorXd> target_modes(const TargetSpec& spec);

/// Index of the basin containing x (nearest mode; orthant for many_well).
std::size_t basin_of(const TargetSpec& spec, std::span<const double> x);

/// Fixed histogram over coordinate 0 (dim 1) or coordinates (0, 1).
struct HistogramGrid {
  std::size_t dims = 1;
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t bins = 0;       ///< per axis
  std::vector<double> probs;  ///< row-major, axis 0 fastest; the remainder mass is `outside`
  double outside = 0.0;

  /// Bin index of x, or bins^dims for points outside the grid.
  std::size_t bin_of(std::span<const double> x) const;
};

/// Empty histogram laid out for the target's default box.
HistogramGrid histogram_layout(const TargetSpec& spec);

struct ReferenceStats {
  std::vector<double> mode_masses;
  HistogramGrid histogram;
  double entropy = 0.0;
  double log_z = 0.0;
};

/// Ground truth by deterministic quadrature (analytic where closed forms exist).
ReferenceStats reference_stats(const TargetSpec& spec);

/// Generic 1D/2D grid-quadrature version of reference_stats; used for gmm_grid
/// and usable on any target of dim <= 2.
ReferenceStats grid_reference_stats(const TargetSpec& spec, double tol = 1e-10);

/// Box outside of which the target's mass is negligible (dim <= 2).
Box quadrature_box(const TargetSpec& spec);

/// Exact draws from the normalized target (inverse-CDF tables for many_well).
Points reference_samples(const TargetSpec& spec, std::size_t n, std::uint64_t seed);

/// Differential entropy of the normalized target where known in closed form or
/// by 1D quadrature; nullopt otherwise.
std::optional<double> target_entropy(const TargetSpec& spec);

}  // namespace cmt
