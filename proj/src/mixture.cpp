#include "cmt/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "cmt/rng.hpp"

namespace cmt {

namespace {

constexpr std::size_t kSampleBlock = 4096;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Solves L z = v in place for row-major lower-triangular L and returns |z|^2.
double forward_solve_sq(const double* l, double* v, std::size_t d) {
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double acc = v[i];
    const double* row = l + i * d;
    for (std::size_t j = 0; j < i; ++j) acc -= row[j] * v[j];
    v[i] = acc / row[i];
    sq += v[i] * v[i];
  }
  return sq;
}

}  // namespace

MixtureModel::MixtureModel(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                           std::vector<Eigen::MatrixXd> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const std::size_t k = weights_.size();
  if (k == 0) throw ContractViolation("MixtureModel: need at least one component");
  if (means_.size() != k || covariances_.size() != k) {
    throw ContractViolation("MixtureModel: weights, means and covariances differ in length");
  }
  dim_ = static_cast<std::size_t>(means_[0].size());
  if (dim_ == 0) throw ContractViolation("MixtureModel: zero-dimensional component");

  double total = 0.0;
  for (const double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractViolation("MixtureModel: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "MixtureModel: weights sum to " << total << ", expected 1";
    throw ContractViolation(os.str());
  }

  chol_.resize(k);
  log_norm_.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (static_cast<std::size_t>(means_[c].size()) != dim_ || static_cast<std::size_t>(covariances_[c].rows()) != dim_ ||
        static_cast<std::size_t>(covariances_[c].cols()) != dim_) {
      throw ContractViolation("MixtureModel: component " + std::to_string(c) + " has inconsistent dimension");
    }
    const Eigen::MatrixXd& cov = covariances_[c];
    if (!cov.allFinite() || !cov.isApprox(cov.transpose(), 1e-12)) {
      throw ContractViolation("MixtureModel: covariance " + std::to_string(c) + " is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw ContractViolation("MixtureModel: covariance " + std::to_string(c) + " is not positive definite");
    }
    const Eigen::MatrixXd l = llt.matrixL();
    chol_[c].resize(dim_ * dim_);
    double log_det_half = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) chol_[c][i * dim_ + j] = l(i, j);
      log_det_half += std::log(l(i, i));
    }
    log_norm_[c] = std::log(weights_[c]) - 0.5 * static_cast<double>(dim_) * kLog2Pi - log_det_half;
  }
}

MixtureModel MixtureModel::isotropic(std::size_t dim, std::size_t k, const Eigen::VectorXd& mean, double scale,
                                     double jitter, std::uint64_t seed) {
  if (dim == 0 || k == 0) throw ContractViolation("MixtureModel::isotropic: dim and k must be positive");
  if (static_cast<std::size_t>(mean.size()) != dim) throw ContractViolation("MixtureModel::isotropic: mean size");
  if (!(scale > 0.0)) throw ContractViolation("MixtureModel::isotropic: scale must be > 0");
  Rng rng = make_rng(seed);
  boost::random::normal_distribution<double> normal;
  std::vector<double> weights(k, 1.0 / static_cast<double>(k));
  std::vector<Eigen::VectorXd> means(k, mean);
  std::vector<Eigen::MatrixXd> covs(k, Eigen::MatrixXd::Identity(dim, dim) * scale * scale);
  if (k > 1) {
    for (auto& m : means) {
      for (std::size_t i = 0; i < dim; ++i) m[i] += jitter * scale * normal(rng);
    }
  }
  // Exact simplex after the 1/k rounding.
  weights.back() = 1.0 - std::accumulate(weights.begin(), weights.end() - 1, 0.0);
  return MixtureModel(std::move(weights), std::move(means), std::move(covs));
}

Eigen::MatrixXd MixtureModel::component_log_terms(const Points& points) const {
  if (static_cast<std::size_t>(points.cols()) != dim_) throw ContractViolation("component_log_terms: dimension");
  const auto n = points.rows();
  const std::size_t k = n_components();
  Eigen::MatrixXd terms(n, static_cast<Eigen::Index>(k));
  std::vector<double> v(dim_);
  for (std::size_t c = 0; c < k; ++c) {
    const double* l = chol_[c].data();
    const double* mu = means_[c].data();
    double* out = terms.col(static_cast<Eigen::Index>(c)).data();
    for (Eigen::Index r = 0; r < n; ++r) {
      const double* x = points.data() + r * static_cast<Eigen::Index>(dim_);
      for (std::size_t i = 0; i < dim_; ++i) v[i] = x[i] - mu[i];
      out[r] = log_norm_[c] - 0.5 * forward_solve_sq(l, v.data(), dim_);
    }
  }
  return terms;
}

double MixtureModel::log_prob(std::span<const double> x) const {
  if (x.size() != dim_) throw ContractViolation("MixtureModel::log_prob: dimension mismatch");
  std::vector<double> v(dim_);
  std::vector<double> terms(n_components());
  for (std::size_t c = 0; c < n_components(); ++c) {
    for (std::size_t i = 0; i < dim_; ++i) v[i] = x[i] - means_[c][static_cast<Eigen::Index>(i)];
    terms[c] = log_norm_[c] - 0.5 * forward_solve_sq(chol_[c].data(), v.data(), dim_);
  }
  return log_sum_exp(terms);
}

std::vector<double> MixtureModel::log_prob_rows(const Points& points) const {
  const Eigen::MatrixXd terms = component_log_terms(points);
  const auto n = terms.rows();
  const auto k = terms.cols();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    double max = terms(r, 0);
    for (Eigen::Index c = 1; c < k; ++c) max = std::max(max, terms(r, c));
    if (max == kNegInf) {
      out[static_cast<std::size_t>(r)] = kNegInf;
      continue;
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) sum += std::exp(terms(r, c) - max);
    out[static_cast<std::size_t>(r)] = max + std::log(sum);
  }
  return out;
}

Points MixtureModel::sample(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw ContractViolation("MixtureModel::sample: n must be >= 1");
  Points out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_));
  std::vector<double> cumulative(n_components());
  std::partial_sum(weights_.begin(), weights_.end(), cumulative.begin());
  std::vector<double> z(dim_);

  for (std::size_t start = 0, block = 0; start < n; start += kSampleBlock, ++block) {
    Rng rng = make_rng(derive_seed(seed, {block}));
    boost::random::uniform_01<double> uniform;
    boost::random::normal_distribution<double> normal;
    const std::size_t stop = std::min(n, start + kSampleBlock);
    for (std::size_t r = start; r < stop; ++r) {
      const double u = uniform(rng) * cumulative.back();
      auto c = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      c = std::min(c, n_components() - 1);
      while (weights_[c] == 0.0 && c > 0) --c;
      for (auto& zi : z) zi = normal(rng);
      const double* l = chol_[c].data();
      double* x = out.data() + r * dim_;
      for (std::size_t i = 0; i < dim_; ++i) {
        double acc = means_[c][static_cast<Eigen::Index>(i)];
        for (std::size_t j = 0; j <= i; ++j) acc += l[i * dim_ + j] * z[j];
        x[i] = acc;
      }
    }
  }
  return out;
}

double MixtureModel::min_covariance_eigenvalue() const {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& cov : covariances_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    out = std::min(out, es.eigenvalues().minCoeff());
  }
  return out;
}

nlohmann::json MixtureModel::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["weights"] = weights_;
  auto means = nlohmann::json::array();
  auto covs = nlohmann::json::array();
  for (std::size_t c = 0; c < n_components(); ++c) {
    means.push_back(std::vector<double>(means_[c].data(), means_[c].data() + dim_));
    std::vector<double> flat(dim_ * dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t k = 0; k < dim_; ++k) flat[i * dim_ + k] = covariances_[c](i, k);
    }
    covs.push_back(std::move(flat));
  }
  j["means"] = std::move(means);
  j["covariances"] = std::move(covs);
  return j;
}

MixtureModel MixtureModel::from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    auto weights = j.at("weights").get<std::vector<double>>();
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (const auto& m : j.at("means")) {
      const auto v = m.get<std::vector<double>>();
      if (v.size() != dim) throw ContractViolation("model JSON: mean length differs from dim");
      means.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(dim)));
    }
    for (const auto& c : j.at("covariances")) {
      const auto v = c.get<std::vector<double>>();
      if (v.size() != dim * dim) throw ContractViolation("model JSON: covariance length differs from dim^2");
      Eigen::MatrixXd cov(dim, dim);
      for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t k = 0; k < dim; ++k) cov(i, k) = v[i * dim + k];
      }
      covs.push_back(std::move(cov));
    }
    return MixtureModel(std::move(weights), std::move(means), std::move(covs));
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("model JSON: ") + e.what());
  }
}

void FitConfig::validate() const {
  if (!(var_floor > 0.0)) throw ContractViolation("FitConfig: var_floor must be > 0");
  if (!(weight_floor >= 0.0 && weight_floor < 1.0)) throw ContractViolation("FitConfig: weight_floor in [0, 1)");
  if (!(em_tol > 0.0)) throw ContractViolation("FitConfig: em_tol must be > 0");
  if (em_max_iters < 1) throw ContractViolation("FitConfig: em_max_iters must be >= 1");
  if (!(component_floor >= 0.0)) throw ContractViolation("FitConfig: component_floor must be >= 0");
  if (!(reset_scale > 0.0)) throw ContractViolation("FitConfig: reset_scale must be > 0");
}

std::vector<double> log_importance_ratios(const WeightedBuffer& buffer, MultiplierPair mult, double log_z) {
  mult.validate(std::numeric_limits<double>::max());
  const auto& lq = buffer.log_q();
  const auto& lp = buffer.log_p();
  const double inv_s = 1.0 / (1.0 + mult.lambda + mult.eta);
  std::vector<double> out(buffer.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (lp[k] - (1.0 + mult.eta) * lq[k]) * inv_s - log_z;
  return out;
}

std::vector<double> importance_weights(const WeightedBuffer& buffer, MultiplierPair mult, double log_z) {
  auto w = log_importance_ratios(buffer, mult, log_z);
  const double lse = log_sum_exp(w);
  if (lse == kNegInf) throw DegenerateBuffer();
  for (auto& v : w) v = std::exp(v - lse);
  return w;
}

namespace {

// Turns log terms into responsibilities in place; returns Σ w_n log q(x_n).
double e_step(Eigen::MatrixXd& terms, std::span<const double> weights) {
  const auto n = terms.rows();
  const auto k = terms.cols();
  double ll = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    double max = terms(r, 0);
    for (Eigen::Index c = 1; c < k; ++c) max = std::max(max, terms(r, c));
    if (max == kNegInf) {
      // Underflow in every component: split evenly so the row stays finite.
      terms.row(r).setConstant(1.0 / static_cast<double>(k));
      if (weights[static_cast<std::size_t>(r)] > 0.0) ll = kNegInf;
      continue;
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      terms(r, c) = std::exp(terms(r, c) - max);
      sum += terms(r, c);
    }
    const double inv = 1.0 / sum;
    for (Eigen::Index c = 0; c < k; ++c) terms(r, c) *= inv;
    const double w = weights[static_cast<std::size_t>(r)];
    if (w > 0.0) ll += w * (max + std::log(sum));
  }
  return ll;
}

// Maximizer of Σ m_k log π_k over the simplex with π_k >= floor.
std::vector<double> floored_simplex(const std::vector<double>& mass, double floor) {
  const std::size_t k = mass.size();
  std::vector<bool> pinned(k, false);
  std::vector<double> pi(k);
  for (;;) {
    double free_mass = 1.0;
    double free_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (pinned[c]) {
        free_mass -= floor;
      } else {
        free_sum += mass[c];
      }
    }
    bool changed = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (pinned[c]) {
        pi[c] = floor;
        continue;
      }
      pi[c] = free_sum > 0.0 ? mass[c] * free_mass / free_sum : free_mass / static_cast<double>(k);
      if (pi[c] < floor) {
        pinned[c] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  std::size_t largest = static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin());
  pi[largest] += 1.0 - total;
  return pi;
}

Eigen::MatrixXd clamp_eigenvalues(const Eigen::MatrixXd& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

struct Params {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

Params params_of(const MixtureModel& m) { return {m.weights(), m.means(), m.covariances()}; }

MixtureModel build(Params p) { return MixtureModel(std::move(p.weights), std::move(p.means), std::move(p.covs)); }

Params m_step(const Params& prev, const Eigen::MatrixXd& resp, const Points& x, std::span<const double> w,
              const FitConfig& cfg) {
  const auto n = x.rows();
  const auto d = static_cast<std::size_t>(x.cols());
  const std::size_t k = prev.weights.size();
  Params next = prev;
  std::vector<double> mass(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double* r = resp.col(static_cast<Eigen::Index>(c)).data();
    double m = 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = w[static_cast<std::size_t>(i)] * r[i];
      if (g == 0.0) continue;
      m += g;
      const double* xi = x.data() + i * static_cast<Eigen::Index>(d);
      for (std::size_t j = 0; j < d; ++j) mean[static_cast<Eigen::Index>(j)] += g * xi[j];
    }
    mass[c] = m;
    if (!(m > 1e-300)) continue;  // no responsibility: parameters do not enter the objective
    mean /= m;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    std::vector<double> diff(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = w[static_cast<std::size_t>(i)] * r[i];
      if (g == 0.0) continue;
      const double* xi = x.data() + i * static_cast<Eigen::Index>(d);
      for (std::size_t j = 0; j < d; ++j) diff[j] = xi[j] - mean[static_cast<Eigen::Index>(j)];
      for (std::size_t a = 0; a < d; ++a) {
        const double ga = g * diff[a];
        for (std::size_t b = 0; b <= a; ++b) cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += ga * diff[b];
      }
    }
    cov /= m;
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    next.means[c] = std::move(mean);
    next.covs[c] = clamp_eigenvalues(cov, cfg.var_floor);
  }
  next.weights = floored_simplex(mass, cfg.weight_floor);
  return next;
}

}  // namespace

FitResult weighted_fit(const MixtureModel& model, const WeightedBuffer& buffer, std::span<const double> weights,
                       const FitConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (weights.size() != buffer.size()) throw ContractViolation("weighted_fit: weights and buffer lengths differ");
  if (model.dim() != buffer.dim()) throw ContractViolation("weighted_fit: model/buffer dimension mismatch");
  double total = 0.0;
  double sq = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractViolation("weighted_fit: weights must be finite and >= 0");
    total += w;
    sq += w * w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("weighted_fit: weights must be normalized");

  const Points& x = buffer.points();
  const std::size_t k = model.n_components();
  FitReport report;
  report.effective_weight_count = 1.0 / sq;

  Params params = params_of(model);
  MixtureModel current = model;
  Eigen::MatrixXd resp = current.component_log_terms(x);
  double ll = e_step(resp, weights);

  // Re-seed starved components before EM so the monotone trace starts afterwards.
  std::vector<std::size_t> starved;
  for (std::size_t c = 0; c < k; ++c) {
    const double m = resp.col(static_cast<Eigen::Index>(c)).dot(
        Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size())));
    if (m < cfg.component_floor) starved.push_back(c);
  }
  if (!starved.empty() && starved.size() < k) {
    const auto d = static_cast<Eigen::Index>(model.dim());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) mean += weights[static_cast<std::size_t>(i)] * x.row(i).transpose();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd diff = x.row(i).transpose() - mean;
      cov += weights[static_cast<std::size_t>(i)] * diff * diff.transpose();
    }
    const Eigen::MatrixXd reset_cov = clamp_eigenvalues(cfg.reset_scale * cov, cfg.var_floor);

    std::vector<double> cumulative(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
    Rng rng = make_rng(seed);
    boost::random::uniform_01<double> uniform;
    const double share = 1.0 / static_cast<double>(k);
    for (const std::size_t c : starved) {
      const double u = uniform(rng) * cumulative.back();
      auto idx = static_cast<Eigen::Index>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      idx = std::min(idx, x.rows() - 1);
      params.means[c] = x.row(idx).transpose();
      params.covs[c] = reset_cov;
      params.weights[c] = share;
    }
    const double sum = std::accumulate(params.weights.begin(), params.weights.end(), 0.0);
    for (auto& w : params.weights) w /= sum;
    params.weights = floored_simplex(params.weights, cfg.weight_floor);
    current = build(params);
    resp = current.component_log_terms(x);
    ll = e_step(resp, weights);
    report.degenerate_components_reset = static_cast<int>(starved.size());
  }

  report.weighted_loglik_trace.push_back(ll);
  for (int it = 0; it < cfg.em_max_iters; ++it) {
    Params next = m_step(params, resp, x, weights, cfg);
    MixtureModel candidate = build(next);
    Eigen::MatrixXd next_resp = candidate.component_log_terms(x);
    const double next_ll = e_step(next_resp, weights);
    ++report.em_iterations;
    report.weighted_loglik_trace.push_back(next_ll);
    const double gain = next_ll - ll;
    params = std::move(next);
    current = std::move(candidate);
    resp = std::move(next_resp);
    ll = next_ll;
    if (gain < cfg.em_tol * std::max(1.0, std::abs(ll))) break;
  }
  return FitResult{std::move(current), std::move(report)};
}

}  // namespace cmt
