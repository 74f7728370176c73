#include "cmt/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmt {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("log_sum_exp: empty input");
  double max = kNegInf;
  for (const double v : values) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw ContractViolation("log_sum_exp: +inf or NaN entry");
    }
    max = std::max(max, v);
  }
  if (max == kNegInf) return kNegInf;
  double sum = 0.0;
  for (const double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

double log_mean_exp(std::span<const double> values) {
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

LogDensity::LogDensity(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {
  if (dim_ == 0) throw ContractViolation("LogDensity: dim must be positive");
  if (!fn_) throw ContractViolation("LogDensity: empty evaluator");
}

WeightedBuffer::WeightedBuffer(Points points, std::vector<double> log_q, std::vector<double> log_p,
                               std::uint64_t rng_seed)
    : points_(std::move(points)), log_q_(std::move(log_q)), log_p_(std::move(log_p)), rng_seed_(rng_seed) {
  const auto n = log_q_.size();
  if (n == 0) throw ContractViolation("WeightedBuffer: empty buffer");
  if (log_p_.size() != n || static_cast<std::size_t>(points_.rows()) != n) {
    throw ContractViolation("WeightedBuffer: points, log_q and log_p lengths differ");
  }
  if (points_.cols() == 0) throw ContractViolation("WeightedBuffer: zero-dimensional points");
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(log_q_[k])) {
      throw ContractViolation("WeightedBuffer: log_q[" + std::to_string(k) + "] is not finite");
    }
    if (std::isnan(log_p_[k]) || log_p_[k] == std::numeric_limits<double>::infinity()) {
      throw ContractViolation("WeightedBuffer: log_p[" + std::to_string(k) + "] is NaN or +inf");
    }
  }
}

void MultiplierPair::validate(double max) const {
  if (!(lambda >= 0.0 && lambda <= max) || !(eta >= 0.0 && eta <= max)) {
    std::ostringstream os;
    os << "multipliers out of [0, " << max << "]: lambda=" << lambda << " eta=" << eta;
    throw ContractViolation(os.str());
  }
}

namespace detail {

WeightedBuffer finish_buffer(Points points, std::vector<double> log_q, const LogDensity& target, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> log_p(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = row_span(points, static_cast<Eigen::Index>(k));
    const double v = target(x);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      std::ostringstream os;
      os.precision(17);
      os << "target returned " << v << " at sample " << k << ", x = (";
      for (std::size_t j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
      os << ")";
      throw NumericalError(os.str());
    }
    log_p[k] = v;
  }
  return WeightedBuffer(std::move(points), std::move(log_q), std::move(log_p), seed);
}

}  // namespace detail

double entropy_estimate(const WeightedBuffer& buffer) {
  double sum = 0.0;
  for (const double v : buffer.log_q()) sum += v;
  return -sum / static_cast<double>(buffer.size());
}

double entropy_standard_error(const WeightedBuffer& buffer) {
  const auto n = static_cast<double>(buffer.size());
  if (buffer.size() < 2) return 0.0;
  const double mean = -entropy_estimate(buffer);
  double ss = 0.0;
  for (const double v : buffer.log_q()) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace cmt
