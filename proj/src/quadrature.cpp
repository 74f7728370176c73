#include "cmt/quadrature.hpp"

#include <cmath>
#include <sstream>

namespace cmt {

TensorGrid make_grid(const Box& box, std::size_t n_per_axis) {
  const std::size_t d = box.dim();
  if (d < 1 || d > 2 || box.hi.size() != d) throw ContractViolation("make_grid: box must be 1D or 2D");
  if (n_per_axis == 0) throw ContractViolation("make_grid: need at least one cell per axis");
  std::vector<double> h(d);
  double log_vol = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    if (!(box.hi[a] > box.lo[a])) throw ContractViolation("make_grid: empty box");
    h[a] = (box.hi[a] - box.lo[a]) / static_cast<double>(n_per_axis);
    log_vol += std::log(h[a]);
  }
  const std::size_t total = d == 1 ? n_per_axis : n_per_axis * n_per_axis;
  TensorGrid grid;
  grid.per_axis = n_per_axis;
  grid.nodes.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));
  grid.log_weights.assign(total, log_vol);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const std::size_t i = idx % n_per_axis;
    grid.nodes(static_cast<Eigen::Index>(idx), 0) = box.lo[0] + (static_cast<double>(i) + 0.5) * h[0];
    if (d == 2) {
      const std::size_t j = idx / n_per_axis;
      grid.nodes(static_cast<Eigen::Index>(idx), 1) = box.lo[1] + (static_cast<double>(j) + 0.5) * h[1];
    }
  }
  return grid;
}

double grid_log_integral(const LogDensity& f, const Box& box, std::size_t n_per_axis) {
  if (f.dim() != box.dim()) throw ContractViolation("grid_log_integral: dimension mismatch");
  const TensorGrid grid = make_grid(box, n_per_axis);
  std::vector<double> terms(grid.log_weights.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    terms[k] = grid.log_weights[k] + f(row_span(grid.nodes, static_cast<Eigen::Index>(k)));
  }
  return log_sum_exp(terms);
}

QuadratureResult refine_log_integral(const LogDensity& f, const Box& box, std::size_t n0, double tol,
                                     int max_levels) {
  QuadratureResult out;
  std::size_t n = n0;
  double prev = grid_log_integral(f, box, n);
  out.trace.push_back(prev);
  for (int level = 1; level <= max_levels; ++level) {
    n *= 2;
    const double cur = grid_log_integral(f, box, n);
    out.trace.push_back(cur);
    if (std::abs(cur - prev) < tol) {
      out.value = cur;
      out.per_axis = n;
      return out;
    }
    prev = cur;
  }
  std::ostringstream os;
  os.precision(17);
  os << "quadrature did not converge to " << tol << "; refinement trace:";
  for (const double v : out.trace) os << ' ' << v;
  throw NumericalError(os.str());
}

GridDual::GridDual(std::vector<double> log_weights, std::vector<double> log_q, std::vector<double> log_p)
    : log_w_(std::move(log_weights)), log_q_(std::move(log_q)), log_p_(std::move(log_p)) {
  if (log_w_.empty() || log_q_.size() != log_w_.size() || log_p_.size() != log_w_.size()) {
    throw ContractViolation("GridDual: inconsistent grid arrays");
  }
  std::vector<double> terms(log_w_.size());
  for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = log_w_[k] + log_q_[k];
  const double log_mass = log_sum_exp(terms);
  for (auto& v : log_q_) v -= log_mass;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (log_q_[k] == kNegInf) continue;
    entropy_ -= std::exp(log_w_[k] + log_q_[k]) * log_q_[k];
  }
}

namespace {

std::vector<double> eval_on(const TensorGrid& grid, const LogDensity& f) {
  std::vector<double> out(grid.log_weights.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(row_span(grid.nodes, static_cast<Eigen::Index>(k)));
  return out;
}

}  // namespace

GridDual::GridDual(const TensorGrid& grid, const LogDensity& q, const LogDensity& target)
    : GridDual(grid.log_weights, eval_on(grid, q), eval_on(grid, target)) {}

double GridDual::log_z(MultiplierPair mult) const {
  const double inv_s = 1.0 / (1.0 + mult.lambda + mult.eta);
  std::vector<double> terms(log_w_.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double lq = mult.lambda == 0.0 ? 0.0 : mult.lambda * log_q_[k];
    terms[k] = log_w_[k] + (lq + log_p_[k]) * inv_s;
  }
  const double out = log_sum_exp(terms);
  if (out == kNegInf) throw DegenerateBuffer("degenerate grid: target vanishes on all nodes");
  return out;
}

std::vector<double> GridDual::next_log_density(MultiplierPair mult) const {
  const double inv_s = 1.0 / (1.0 + mult.lambda + mult.eta);
  const double lz = log_z(mult);
  std::vector<double> out(log_w_.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double lq = mult.lambda == 0.0 ? 0.0 : mult.lambda * log_q_[k];
    out[k] = (lq + log_p_[k]) * inv_s - lz;
  }
  return out;
}

double grid_kl(std::span<const double> log_weights, std::span<const double> log_a, std::span<const double> log_b) {
  if (log_a.size() != log_weights.size() || log_b.size() != log_weights.size()) {
    throw ContractViolation("grid_kl: size mismatch");
  }
  double kl = 0.0;
  for (std::size_t k = 0; k < log_a.size(); ++k) {
    if (log_a[k] == kNegInf) continue;
    kl += std::exp(log_weights[k] + log_a[k]) * (log_a[k] - log_b[k]);
  }
  return kl;
}

}  // namespace cmt
