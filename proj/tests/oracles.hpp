#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

#include <boost/math/tools/roots.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Big = boost::multiprecision::cpp_bin_float_50;

struct Gauss {
  double mean;
  double var;
};

/// KL(a || b) for univariate Gaussians.
inline double kl(Gauss a, Gauss b) {
  return 0.5 * (std::log(b.var / a.var) + (a.var + (a.mean - b.mean) * (a.mean - b.mean)) / b.var - 1.0);
}

inline double entropy(Gauss a) { return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * a.var); }

/// Normalized q^{a} p^{b} for Gaussians q, p (a, b >= 0, a + b > 0).
inline Gauss power_product(Gauss q, double a, Gauss p, double b) {
  const double prec = a / q.var + b / p.var;
  return {(a * q.mean / q.var + b * p.mean / p.var) / prec, 1.0 / prec};
}

/// One constrained update q_{i+1} ∝ q_i^{λ/s} p^{1/s}, s = 1+λ+η.
inline Gauss step(Gauss q, Gauss p, double lambda, double eta) {
  const double s = 1.0 + lambda + eta;
  return power_product(q, lambda / s, p, 1.0 / s);
}

/// λ with KL(step(q, p, λ, 0) || q) = eps, bracketed in log λ.
inline double lambda_root(Gauss q, Gauss p, double eps) {
  const auto f = [&](double log_lambda) { return kl(step(q, p, std::exp(log_lambda), 0.0), q) - eps; };
  if (f(std::log(1e-12)) <= 0.0) return 0.0;
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, std::log(1e-12), std::log(1e12),
                                                           boost::math::tools::eps_tolerance<double>(50), iters);
  return std::exp(0.5 * (lo + hi));
}

/// log Σ exp(v) in 50-digit arithmetic.
inline double log_sum_exp(std::span<const double> v) {
  Big s = 0;
  for (const double x : v) s += boost::multiprecision::exp(Big(x));
  return static_cast<double>(boost::multiprecision::log(s));
}

}  // namespace oracle
