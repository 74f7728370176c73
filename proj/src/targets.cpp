#include "cmt/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "cmt/rng.hpp"

namespace cmt {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<double> grid_axis(const TargetSpec& spec) {
  std::vector<double> out(spec.grid_size);
  const double mid = 0.5 * static_cast<double>(spec.grid_size - 1);
  for (std::size_t j = 0; j < spec.grid_size; ++j) out[j] = (static_cast<double>(j) - mid) * spec.spacing;
  return out;
}

// Unnormalized 1D log-density of one many_well coordinate.
double well_log(const TargetSpec& s, double x) {
  const double q = x * x - s.a;
  return -q * q / s.b - 0.5 * s.confinement * x * x;
}

double well_half_width(const TargetSpec& s) { return std::sqrt(std::max(s.a, 0.0) + std::sqrt(800.0 * s.b)); }

struct WellMoments {
  double log_z = 0.0;
  double entropy = 0.0;
  double negative_mass = 0.5;
};

WellMoments well_moments(const TargetSpec& s) {
  using boost::math::quadrature::gauss_kronrod;
  const double l = well_half_width(s);
  // The mode offset keeps the exponent bounded before normalization.
  double peak = well_log(s, 0.0);
  const double x_star_sq = s.a - 0.25 * s.confinement * s.b;
  if (x_star_sq > 0.0) peak = std::max(peak, well_log(s, std::sqrt(x_star_sq)));
  const auto f = [&](double x) { return std::exp(well_log(s, x) - peak); };
  const double neg = gauss_kronrod<double, 61>::integrate(f, -l, 0.0, 15, 1e-14);
  const double pos = gauss_kronrod<double, 61>::integrate(f, 0.0, l, 15, 1e-14);
  const double z = neg + pos;
  const double mean_log = gauss_kronrod<double, 61>::integrate(
      [&](double x) { return f(x) * (well_log(s, x) - peak); }, -l, l, 15, 1e-14) / z;
  WellMoments m;
  m.log_z = std::log(z) + peak;
  m.entropy = std::log(z) - mean_log;
  m.negative_mass = neg / z;
  return m;
}

std::vector<double> well_bin_masses(const TargetSpec& s, const WellMoments& m, double lo, double hi,
                                    std::size_t bins) {
  using boost::math::quadrature::gauss;
  std::vector<double> out(bins);
  const double h = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    const double a = lo + static_cast<double>(i) * h;
    out[i] = gauss<double, 20>::integrate([&](double x) { return std::exp(well_log(s, x) - m.log_z); }, a, a + h);
  }
  return out;
}

}  // namespace

TargetKind parse_target_kind(const std::string& name) {
  if (name == "gauss1d") return TargetKind::gauss1d;
  if (name == "gmm_grid") return TargetKind::gmm_grid;
  if (name == "many_well") return TargetKind::many_well;
  if (name == "funnel") return TargetKind::funnel;
  throw ContractViolation("unknown target name '" + name + "'");
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::gauss1d:
      return "gauss1d";
    case TargetKind::gmm_grid:
      return "gmm_grid";
    case TargetKind::many_well:
      return "many_well";
    case TargetKind::funnel:
      return "funnel";
  }
  return "unknown";
}

void TargetSpec::validate() const {
  if (dim == 0) throw ContractViolation("target: dim must be positive");
  if (!std::isfinite(offset)) throw ContractViolation("target: offset must be finite");
  switch (kind) {
    case TargetKind::gauss1d:
      if (dim != 1) throw ContractViolation("gauss1d: dim must be 1");
      if (!(sigma > 0.0)) throw ContractViolation("gauss1d: sigma must be > 0");
      break;
    case TargetKind::gmm_grid:
      if (dim > 2) throw ContractViolation("gmm_grid: dim must be 1 or 2");
      if (grid_size == 0) throw ContractViolation("gmm_grid: grid_size must be >= 1");
      if (!(sigma > 0.0) || !(spacing > 0.0)) throw ContractViolation("gmm_grid: sigma and spacing must be > 0");
      break;
    case TargetKind::many_well:
      if (!(b > 0.0)) throw ContractViolation("many_well: b must be > 0");
      if (!(confinement >= 0.0)) throw ContractViolation("many_well: confinement must be >= 0");
      if (dim > 16) throw ContractViolation("many_well: dim must be <= 16 (2^dim basins)");
      break;
    case TargetKind::funnel:
      if (dim < 2) throw ContractViolation("funnel: dim must be >= 2");
      if (!(funnel_scale > 0.0)) throw ContractViolation("funnel: funnel_scale must be > 0");
      break;
  }
}

LogDensity make_target(const TargetSpec& spec) {
  spec.validate();
  const TargetSpec s = spec;
  switch (s.kind) {
    case TargetKind::gauss1d:
      return LogDensity(1, [s](std::span<const double> x) {
        const double z = (x[0] - s.mu) / s.sigma;
        return s.offset - 0.5 * kLog2Pi - std::log(s.sigma) - 0.5 * z * z;
      });
    case TargetKind::gmm_grid: {
      const auto centers = target_modes(s);
      const double m = static_cast<double>(centers.size());
      const double log_norm = s.offset - std::log(m) - 0.5 * static_cast<double>(s.dim) * (kLog2Pi + 2.0 * std::log(s.sigma));
      const double inv_var = 1.0 / (s.sigma * s.sigma);
      return LogDensity(s.dim, [centers, log_norm, inv_var](std::span<const double> x) {
        double terms[64];
        std::vector<double> heap;
        double* t = terms;
        if (centers.size() > 64) {
          heap.resize(centers.size());
          t = heap.data();
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
          double sq = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - centers[k][static_cast<Eigen::Index>(i)];
            sq += d * d;
          }
          t[k] = -0.5 * sq * inv_var;
        }
        return log_norm + log_sum_exp(std::span<const double>(t, centers.size()));
      });
    }
    case TargetKind::many_well:
      return LogDensity(s.dim, [s](std::span<const double> x) {
        double out = s.offset;
        for (const double xi : x) out += well_log(s, xi);
        return out;
      });
    case TargetKind::funnel:
      return LogDensity(s.dim, [s](std::span<const double> x) {
        const double v = x[0];
        const double z0 = v / s.funnel_scale;
        double out = s.offset - 0.5 * kLog2Pi - std::log(s.funnel_scale) - 0.5 * z0 * z0;
        const double inv_var = std::exp(-v);
        for (std::size_t k = 1; k < x.size(); ++k) out += -0.5 * kLog2Pi - 0.5 * v - 0.5 * x[k] * x[k] * inv_var;
        return out;
      });
  }
  throw ContractViolation("make_target: unknown target");
}

double true_log_z(const TargetSpec& spec) {
  spec.validate();
  if (spec.kind == TargetKind::many_well) {
    return spec.offset + static_cast<double>(spec.dim) * well_moments(spec).log_z;
  }
  return spec.offset;
}

std::optional<double> target_entropy(const TargetSpec& spec) {
  spec.validate();
  const double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
  switch (spec.kind) {
    case TargetKind::gauss1d:
      return 0.5 * std::log(two_pi_e * spec.sigma * spec.sigma);
    case TargetKind::funnel:
      // E[x_1] = 0, so the conditional variances exp(x_1) add nothing on average.
      return 0.5 * std::log(two_pi_e * spec.funnel_scale * spec.funnel_scale) +
             0.5 * static_cast<double>(spec.dim - 1) * std::log(two_pi_e);
    case TargetKind::many_well:
      return static_cast<double>(spec.dim) * well_moments(spec).entropy;
    case TargetKind::gmm_grid:
      return grid_reference_stats(spec).entropy;
  }
  return std::nullopt;
}

std::vector<Eigen::VectorXd> target_modes(const TargetSpec& spec) {
  spec.validate();
  std::vector<Eigen::VectorXd> out;
  switch (spec.kind) {
    case TargetKind::gauss1d:
      out.push_back(Eigen::VectorXd::Constant(1, spec.mu));
      break;
    case TargetKind::gmm_grid: {
      const auto axis = grid_axis(spec);
      if (spec.dim == 1) {
        for (const double c : axis) out.push_back(Eigen::VectorXd::Constant(1, c));
      } else {
        for (const double y : axis) {
          for (const double x : axis) out.push_back(Eigen::Vector2d(x, y));
        }
      }
      break;
    }
    case TargetKind::many_well: {
      const double x_star = std::sqrt(std::max(spec.a - 0.25 * spec.confinement * spec.b, 0.0));
      const std::size_t count = std::size_t{1} << spec.dim;
      for (std::size_t m = 0; m < count; ++m) {
        Eigen::VectorXd c(static_cast<Eigen::Index>(spec.dim));
        for (std::size_t k = 0; k < spec.dim; ++k) c[static_cast<Eigen::Index>(k)] = ((m >> k) & 1U) ? x_star : -x_star;
        out.push_back(std::move(c));
      }
      break;
    }
    case TargetKind::funnel:
      out.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim)));
      break;
  }
  return out;
}

std::size_t basin_of(const TargetSpec& spec, std::span<const double> x) {
  switch (spec.kind) {
    case TargetKind::gauss1d:
    case TargetKind::funnel:
      return 0;
    case TargetKind::many_well: {
      std::size_t m = 0;
      for (std::size_t k = 0; k < spec.dim; ++k) {
        if (x[k] > 0.0) m |= std::size_t{1} << k;
      }
      return m;
    }
    case TargetKind::gmm_grid: {
      // Voronoi cells of a lattice are products of per-axis nearest centers.
      const double mid = 0.5 * static_cast<double>(spec.grid_size - 1);
      std::size_t idx = 0;
      std::size_t stride = 1;
      for (std::size_t i = 0; i < spec.dim; ++i) {
        const double j = std::round(x[i] / spec.spacing + mid);
        const auto clamped = static_cast<std::size_t>(std::clamp(j, 0.0, static_cast<double>(spec.grid_size - 1)));
        idx += clamped * stride;
        stride *= spec.grid_size;
      }
      return idx;
    }
  }
  return 0;
}

std::size_t HistogramGrid::bin_of(std::span<const double> x) const {
  const std::size_t outside_idx = dims == 1 ? bins : bins * bins;
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (std::size_t a = 0; a < dims; ++a) {
    const double t = (x[a] - lo[a]) / (hi[a] - lo[a]);
    if (!(t >= 0.0 && t < 1.0)) return outside_idx;
    const auto i = std::min(static_cast<std::size_t>(t * static_cast<double>(bins)), bins - 1);
    idx += i * stride;
    stride *= bins;
  }
  return idx;
}

HistogramGrid histogram_layout(const TargetSpec& spec) {
  spec.validate();
  HistogramGrid h;
  h.dims = std::min<std::size_t>(spec.dim, 2);
  switch (spec.kind) {
    case TargetKind::gauss1d:
      h.bins = 60;
      h.lo = {spec.mu - 6.0 * spec.sigma};
      h.hi = {spec.mu + 6.0 * spec.sigma};
      break;
    case TargetKind::gmm_grid: {
      const double half = 0.5 * static_cast<double>(spec.grid_size - 1) * spec.spacing + std::max(2.0, 5.0 * spec.sigma);
      h.bins = 48;
      h.lo.assign(h.dims, -half);
      h.hi.assign(h.dims, half);
      break;
    }
    case TargetKind::many_well: {
      const double x_star = std::sqrt(std::max(spec.a - 0.25 * spec.confinement * spec.b, 0.0));
      h.bins = 48;
      h.lo.assign(h.dims, -(x_star + 2.0));
      h.hi.assign(h.dims, x_star + 2.0);
      break;
    }
    case TargetKind::funnel:
      h.bins = 36;
      h.lo = {-3.0 * spec.funnel_scale, -10.0};
      h.hi = {3.0 * spec.funnel_scale, 10.0};
      break;
  }
  const std::size_t cells = h.dims == 1 ? h.bins : h.bins * h.bins;
  h.probs.assign(cells, 0.0);
  return h;
}

Box quadrature_box(const TargetSpec& spec) {
  spec.validate();
  if (spec.dim > 2) throw ContractViolation("quadrature_box: only dim <= 2 is supported");
  switch (spec.kind) {
    case TargetKind::gauss1d:
      return Box{{spec.mu - 12.0 * spec.sigma}, {spec.mu + 12.0 * spec.sigma}};
    case TargetKind::gmm_grid: {
      const double half = 0.5 * static_cast<double>(spec.grid_size - 1) * spec.spacing + 12.0 * spec.sigma;
      return Box{std::vector<double>(spec.dim, -half), std::vector<double>(spec.dim, half)};
    }
    case TargetKind::many_well: {
      const double l = well_half_width(spec);
      return Box{std::vector<double>(spec.dim, -l), std::vector<double>(spec.dim, l)};
    }
    case TargetKind::funnel:
      break;
  }
  throw ContractViolation("quadrature_box: the funnel neck is not resolvable on a uniform grid");
}

ReferenceStats grid_reference_stats(const TargetSpec& spec, double tol) {
  const LogDensity target = make_target(spec);
  const Box box = quadrature_box(spec);
  const QuadratureResult lz = refine_log_integral(target, box, 64, tol);
  const TensorGrid grid = make_grid(box, lz.per_axis);

  ReferenceStats out;
  out.log_z = lz.value;
  out.mode_masses.assign(target_modes(spec).size(), 0.0);
  for (Eigen::Index k = 0; k < grid.nodes.rows(); ++k) {
    const auto x = row_span(grid.nodes, k);
    const double lp = target(x) - lz.value;
    if (lp == kNegInf) continue;
    const double mass = std::exp(grid.log_weights[static_cast<std::size_t>(k)] + lp);
    out.entropy -= mass * lp;
    out.mode_masses[basin_of(spec, x)] += mass;
  }

  using boost::math::quadrature::gauss;
  HistogramGrid h = histogram_layout(spec);
  const double w0 = (h.hi[0] - h.lo[0]) / static_cast<double>(h.bins);
  double total = 0.0;
  if (h.dims == 1) {
    for (std::size_t i = 0; i < h.bins; ++i) {
      const double a = h.lo[0] + static_cast<double>(i) * w0;
      h.probs[i] = gauss<double, 20>::integrate(
          [&](double x) { return std::exp(target(std::span<const double>(&x, 1)) - lz.value); }, a, a + w0);
      total += h.probs[i];
    }
  } else {
    const double w1 = (h.hi[1] - h.lo[1]) / static_cast<double>(h.bins);
    for (std::size_t j = 0; j < h.bins; ++j) {
      const double b0 = h.lo[1] + static_cast<double>(j) * w1;
      for (std::size_t i = 0; i < h.bins; ++i) {
        const double a0 = h.lo[0] + static_cast<double>(i) * w0;
        const double p = gauss<double, 10>::integrate(
            [&](double y) {
              return gauss<double, 10>::integrate(
                  [&](double x) {
                    const double pt[2] = {x, y};
                    return std::exp(target(std::span<const double>(pt, 2)) - lz.value);
                  },
                  a0, a0 + w0);
            },
            b0, b0 + w1);
        h.probs[j * h.bins + i] = p;
        total += p;
      }
    }
  }
  h.outside = std::max(0.0, 1.0 - total);
  out.histogram = std::move(h);
  return out;
}

ReferenceStats reference_stats(const TargetSpec& spec) {
  spec.validate();
  ReferenceStats out;
  out.log_z = true_log_z(spec);
  HistogramGrid h = histogram_layout(spec);
  double total = 0.0;

  switch (spec.kind) {
    case TargetKind::gauss1d: {
      out.mode_masses = {1.0};
      out.entropy = *target_entropy(spec);
      const double w = (h.hi[0] - h.lo[0]) / static_cast<double>(h.bins);
      for (std::size_t i = 0; i < h.bins; ++i) {
        const double a = h.lo[0] + static_cast<double>(i) * w;
        h.probs[i] = normal_cdf((a + w - spec.mu) / spec.sigma) - normal_cdf((a - spec.mu) / spec.sigma);
        total += h.probs[i];
      }
      break;
    }
    case TargetKind::gmm_grid:
      return grid_reference_stats(spec);
    case TargetKind::many_well: {
      const WellMoments m = well_moments(spec);
      out.entropy = static_cast<double>(spec.dim) * m.entropy;
      const std::size_t count = std::size_t{1} << spec.dim;
      out.mode_masses.resize(count);
      for (std::size_t idx = 0; idx < count; ++idx) {
        double mass = 1.0;
        for (std::size_t k = 0; k < spec.dim; ++k) mass *= ((idx >> k) & 1U) ? 1.0 - m.negative_mass : m.negative_mass;
        out.mode_masses[idx] = mass;
      }
      const auto b0 = well_bin_masses(spec, m, h.lo[0], h.hi[0], h.bins);
      if (h.dims == 1) {
        h.probs = b0;
      } else {
        const auto b1 = well_bin_masses(spec, m, h.lo[1], h.hi[1], h.bins);
        for (std::size_t j = 0; j < h.bins; ++j) {
          for (std::size_t i = 0; i < h.bins; ++i) h.probs[j * h.bins + i] = b0[i] * b1[j];
        }
      }
      total = std::accumulate(h.probs.begin(), h.probs.end(), 0.0);
      break;
    }
    case TargetKind::funnel: {
      using boost::math::quadrature::gauss_kronrod;
      out.mode_masses = {1.0};
      out.entropy = *target_entropy(spec);
      const double s = spec.funnel_scale;
      const double w0 = (h.hi[0] - h.lo[0]) / static_cast<double>(h.bins);
      const double w1 = (h.hi[1] - h.lo[1]) / static_cast<double>(h.bins);
      for (std::size_t i = 0; i < h.bins; ++i) {
        const double a = h.lo[0] + static_cast<double>(i) * w0;
        for (std::size_t j = 0; j < h.bins; ++j) {
          const double lo1 = h.lo[1] + static_cast<double>(j) * w1;
          const double hi1 = lo1 + w1;
          const auto f = [&](double v) {
            const double sd = std::exp(0.5 * v);
            const double dens = std::exp(-0.5 * (v / s) * (v / s)) / (s * std::sqrt(2.0 * std::numbers::pi));
            return dens * (normal_cdf(hi1 / sd) - normal_cdf(lo1 / sd));
          };
          h.probs[j * h.bins + i] = gauss_kronrod<double, 31>::integrate(f, a, a + w0, 10, 1e-12);
          total += h.probs[j * h.bins + i];
        }
      }
      break;
    }
  }
  h.outside = std::max(0.0, 1.0 - total);
  out.histogram = std::move(h);
  return out;
}

Points reference_samples(const TargetSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ContractViolation("reference_samples: n must be >= 1");
  Rng rng = make_rng(seed);
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_01<double> uniform;
  Points out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));

  switch (spec.kind) {
    case TargetKind::gauss1d:
      for (std::size_t r = 0; r < n; ++r) out(static_cast<Eigen::Index>(r), 0) = spec.mu + spec.sigma * normal(rng);
      break;
    case TargetKind::gmm_grid: {
      const auto centers = target_modes(spec);
      for (std::size_t r = 0; r < n; ++r) {
        const auto c = std::min(static_cast<std::size_t>(uniform(rng) * static_cast<double>(centers.size())),
                                centers.size() - 1);
        for (std::size_t i = 0; i < spec.dim; ++i) {
          out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
              centers[c][static_cast<Eigen::Index>(i)] + spec.sigma * normal(rng);
        }
      }
      break;
    }
    case TargetKind::funnel:
      for (std::size_t r = 0; r < n; ++r) {
        const double v = spec.funnel_scale * normal(rng);
        out(static_cast<Eigen::Index>(r), 0) = v;
        const double sd = std::exp(0.5 * v);
        for (std::size_t i = 1; i < spec.dim; ++i) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = sd * normal(rng);
      }
      break;
    case TargetKind::many_well: {
      // Inverse-CDF table of the 1D marginal (the target is separable).
      constexpr std::size_t kNodes = 40001;
      const double l = well_half_width(spec);
      const double h = 2.0 * l / static_cast<double>(kNodes - 1);
      std::vector<double> xs(kNodes);
      std::vector<double> cdf(kNodes, 0.0);
      const double peak = well_log(spec, std::sqrt(std::max(spec.a - 0.25 * spec.confinement * spec.b, 0.0)));
      double prev = 0.0;
      for (std::size_t k = 0; k < kNodes; ++k) {
        xs[k] = -l + static_cast<double>(k) * h;
        const double p = std::exp(well_log(spec, xs[k]) - peak);
        if (k > 0) cdf[k] = cdf[k - 1] + 0.5 * (p + prev) * h;
        prev = p;
      }
      for (auto& c : cdf) c /= cdf.back();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < spec.dim; ++i) {
          const double u = uniform(rng);
          const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
          const auto k = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf.begin(), 1, kNodes - 1));
          const double t = (u - cdf[k - 1]) / std::max(cdf[k] - cdf[k - 1], 1e-300);
          out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = xs[k - 1] + t * h;
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace cmt
