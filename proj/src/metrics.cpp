#include "cmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmt {

std::size_t clip_count(std::size_t n) { return std::max<std::size_t>(1, n / 10000); }

double ess_fraction(std::span<const double> log_weights, bool clip) {
  if (log_weights.empty()) throw ContractViolation("ess_fraction: empty weight vector");
  for (const double v : log_weights) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw ContractViolation("ess_fraction: log-weights must be finite or -inf");
    }
  }
  std::vector<double> lw(log_weights.begin(), log_weights.end());
  if (clip && lw.size() > 1) {
    const std::size_t k = std::min(clip_count(lw.size()), lw.size() - 1);
    // After nth_element the k largest values sit at the back; the smallest of them bounds all k.
    std::vector<double> sorted = lw;
    std::nth_element(sorted.begin(), sorted.end() - static_cast<std::ptrdiff_t>(k), sorted.end());
    const double cap = sorted[sorted.size() - k];
    for (auto& v : lw) v = std::min(v, cap);
  }
  const double m = *std::max_element(lw.begin(), lw.end());
  if (m == kNegInf) throw ContractViolation("ess_fraction: every weight is zero");
  double s1 = 0.0;
  double s2 = 0.0;
  for (const double v : lw) {
    const double w = std::exp(v - m);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / (static_cast<double>(lw.size()) * s2);
}

namespace {

Estimate mean_and_se(std::span<const double> xs) {
  const auto n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  const double var = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace

EuboEstimate eubo_estimate(const Points& reference, const MixtureModel& model, const LogDensity& target) {
  if (reference.rows() == 0) throw ContractViolation("eubo_estimate: no reference points");
  const std::vector<double> lq = model.log_prob_rows(reference);
  std::vector<double> diff(lq.size());
  EuboEstimate out;
  for (std::size_t k = 0; k < lq.size(); ++k) {
    if (lq[k] == kNegInf) {
      out.offending.push_back(k);
      continue;
    }
    diff[k] = target(row_span(reference, static_cast<Eigen::Index>(k))) - lq[k];
  }
  if (!out.offending.empty()) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  const Estimate e = mean_and_se(diff);
  out.value = e.value;
  out.std_error = e.std_error;
  return out;
}

EvidenceEstimate elbo_and_logz(const WeightedBuffer& buffer) {
  const std::size_t n = buffer.size();
  std::vector<double> lw(n);
  for (std::size_t k = 0; k < n; ++k) lw[k] = buffer.log_p()[k] - buffer.log_q()[k];

  EvidenceEstimate out;
  out.log_z_hat = log_mean_exp(lw);
  if (out.log_z_hat == kNegInf) throw DegenerateBuffer();
  double m2 = 0.0;
  for (const double v : lw) m2 += std::exp(2.0 * (v - out.log_z_hat));
  m2 /= static_cast<double>(n);
  // Var of the ratio estimator over its mean squared, then delta method on the log.
  const double rel_var = std::max(m2 - 1.0, 0.0);
  out.log_z_se = std::sqrt(rel_var / static_cast<double>(n));

  bool finite = std::all_of(lw.begin(), lw.end(), [](double v) { return std::isfinite(v); });
  if (finite) {
    const Estimate e = mean_and_se(lw);
    out.elbo = e.value;
    out.elbo_se = e.std_error;
  } else {
    out.elbo = kNegInf;
    out.elbo_se = std::numeric_limits<double>::infinity();
  }

  std::vector<double> clamped = lw;
  if (n > 1) {
    const std::size_t k = std::min(clip_count(n), n - 1);
    std::vector<double> sorted = lw;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    const double floor = sorted[k - 1];
    for (auto& v : clamped) v = std::max(v, floor);
  }
  out.elbo_clipped = mean_and_se(clamped).value;
  return out;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return 0.5 * s;
}

std::vector<double> empirical_mode_masses(const Points& samples, const TargetSpec& spec) {
  if (samples.rows() == 0) throw ContractViolation("empirical_mode_masses: no samples");
  std::vector<double> out(target_modes(spec).size(), 0.0);
  const double w = 1.0 / static_cast<double>(samples.rows());
  for (Eigen::Index r = 0; r < samples.rows(); ++r) out[basin_of(spec, row_span(samples, r))] += w;
  return out;
}

double mode_mass_tv(const Points& samples, const TargetSpec& spec, const ReferenceStats& reference) {
  return total_variation(empirical_mode_masses(samples, spec), reference.mode_masses);
}

double histogram_tv(const Points& samples, const ReferenceStats& reference) {
  const HistogramGrid& h = reference.histogram;
  if (samples.rows() == 0) throw ContractViolation("histogram_tv: no samples");
  std::vector<double> emp(h.probs.size() + 1, 0.0);
  const double w = 1.0 / static_cast<double>(samples.rows());
  for (Eigen::Index r = 0; r < samples.rows(); ++r) emp[h.bin_of(row_span(samples, r))] += w;
  std::vector<double> ref(h.probs);
  ref.push_back(h.outside);
  return total_variation(emp, ref);
}

}  // namespace cmt
