#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <boost/random/uniform_01.hpp>

#include "cmt/core.hpp"
#include "cmt/mixture.hpp"
#include "cmt/rng.hpp"
#include "oracles.hpp"

namespace {

using cmt::kNegInf;

cmt::MixtureModel normal_1d(double mean = 0.0, double sd = 1.0) {
  return cmt::MixtureModel({1.0}, {Eigen::VectorXd::Constant(1, mean)}, {Eigen::MatrixXd::Constant(1, 1, sd * sd)});
}

TEST(LogSumExp, TwoEqualTerms) {
  const std::vector<double> v{0.0, 0.0};
  EXPECT_NEAR(cmt::log_sum_exp(v), std::log(2.0), 1e-15);
}

TEST(LogSumExp, NegativeInfinityIsAbsorbed) {
  const std::vector<double> v{kNegInf, 0.0};
  EXPECT_EQ(cmt::log_sum_exp(v), 0.0);
}

TEST(LogSumExp, AllNegativeInfinity) {
  const std::vector<double> v{kNegInf, kNegInf};
  EXPECT_EQ(cmt::log_sum_exp(v), kNegInf);
}

TEST(LogSumExp, EmptyInputIsAContractViolation) {
  EXPECT_THROW(cmt::log_sum_exp(std::vector<double>{}), cmt::ContractViolation);
}

TEST(LogSumExp, RejectsPositiveInfinityAndNan) {
  EXPECT_THROW(cmt::log_sum_exp(std::vector<double>{0.0, INFINITY}), cmt::ContractViolation);
  EXPECT_THROW(cmt::log_sum_exp(std::vector<double>{NAN}), cmt::ContractViolation);
}

TEST(LogSumExp, MatchesExtendedPrecision) {
  cmt::Rng rng = cmt::make_rng(11);
  boost::random::uniform_01<double> u;
  std::vector<double> v(1000);
  for (auto& x : v) x = std::log(u(rng));
  EXPECT_NEAR(cmt::log_sum_exp(v), oracle::log_sum_exp(v), 1e-13);
}

TEST(LogSumExp, ShiftEquivariant) {
  const std::vector<double> v{-3.0, 1.5, 0.25, -700.0, 12.0};
  for (const double c : {-500.0, -1.0, 0.5, 300.0}) {
    std::vector<double> w = v;
    for (auto& x : w) x += c;
    EXPECT_NEAR(cmt::log_sum_exp(w), cmt::log_sum_exp(v) + c, 1e-12 * (1.0 + std::abs(c)));
  }
}

TEST(LogMeanExp, ConstantInput) {
  const std::vector<double> v(7, 2.5);
  EXPECT_NEAR(cmt::log_mean_exp(v), 2.5, 1e-15);
}

TEST(WeightedBuffer, RejectsShapeMismatch) {
  cmt::Points pts(2, 1);
  pts << 0.0, 1.0;
  EXPECT_THROW(cmt::WeightedBuffer(pts, {0.0}, {0.0, 0.0}), cmt::ContractViolation);
  EXPECT_THROW(cmt::WeightedBuffer(cmt::Points(0, 1), {}, {}), cmt::ContractViolation);
}

TEST(WeightedBuffer, RejectsNonFiniteModelDensity) {
  cmt::Points pts(1, 1);
  pts << 0.0;
  EXPECT_THROW(cmt::WeightedBuffer(pts, {kNegInf}, {0.0}), cmt::ContractViolation);
  EXPECT_NO_THROW(cmt::WeightedBuffer(pts, {0.0}, {kNegInf}));
}

TEST(MultiplierPair, Bounds) {
  EXPECT_NO_THROW((cmt::MultiplierPair{0.0, 1e10}.validate()));
  EXPECT_THROW((cmt::MultiplierPair{-1e-3, 0.0}.validate()), cmt::ContractViolation);
  EXPECT_THROW((cmt::MultiplierPair{0.0, 2e10}.validate()), cmt::ContractViolation);
}

TEST(DrawBuffer, IdenticalDensitiesDifferByTheTargetConstant) {
  const auto model = normal_1d();
  const double c = 3.25;
  const cmt::LogDensity target(1, [&](std::span<const double> x) { return model.log_prob(x) + c; });
  const auto buf = cmt::draw_buffer(model, target, 4, 7);
  ASSERT_EQ(buf.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(buf.log_p()[k] - buf.log_q()[k], c, 1e-14);
}

TEST(DrawBuffer, SingleRow) {
  const auto model = normal_1d();
  const cmt::LogDensity target(1, [](std::span<const double>) { return 0.0; });
  const auto buf = cmt::draw_buffer(model, target, 1, 3);
  EXPECT_EQ(buf.size(), 1u);
  EXPECT_EQ(buf.points().rows(), 1);
}

TEST(DrawBuffer, BitIdenticalForFixedSeed) {
  const auto model = normal_1d(0.5, 2.0);
  const cmt::LogDensity target(1, [](std::span<const double> x) { return -x[0] * x[0]; });
  const auto a = cmt::draw_buffer(model, target, 1000, 42);
  const auto b = cmt::draw_buffer(model, target, 1000, 42);
  EXPECT_EQ(a.points(), b.points());
  EXPECT_EQ(a.log_q(), b.log_q());
  EXPECT_EQ(a.log_p(), b.log_p());
  const auto c = cmt::draw_buffer(model, target, 1000, 43);
  EXPECT_NE(a.points(), c.points());
}

TEST(DrawBuffer, NanTargetIsAnErrorNamingThePoint) {
  const auto model = normal_1d();
  const cmt::LogDensity target(1, [](std::span<const double> x) { return x[0] > 0.0 ? NAN : 0.0; });
  try {
    (void)cmt::draw_buffer(model, target, 100, 1);
    FAIL() << "expected NumericalError";
  } catch (const cmt::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("sample"), std::string::npos);
  }
}

TEST(DrawBuffer, DimensionMismatch) {
  const auto model = normal_1d();
  const cmt::LogDensity target(2, [](std::span<const double>) { return 0.0; });
  EXPECT_THROW((void)cmt::draw_buffer(model, target, 10, 1), cmt::ContractViolation);
  EXPECT_THROW((void)cmt::draw_buffer(model, cmt::LogDensity(1, [](std::span<const double>) { return 0.0; }), 0, 1),
               cmt::ContractViolation);
}

TEST(EntropyEstimate, StandardNormal) {
  const auto model = normal_1d();
  const cmt::LogDensity target(1, [](std::span<const double>) { return 0.0; });
  const auto buf = cmt::draw_buffer(model, target, 100000, 5);
  const double h = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  EXPECT_NEAR(cmt::entropy_estimate(buf), h, 3.0 * cmt::entropy_standard_error(buf));
  EXPECT_NEAR(h, 1.4189, 1e-4);
}

TEST(EntropyEstimate, ConstantDensity) {
  cmt::Points pts(3, 1);
  pts << 0.1, 0.2, 0.3;
  const cmt::WeightedBuffer buf(pts, {-2.5, -2.5, -2.5}, {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(cmt::entropy_estimate(buf), 2.5);
  EXPECT_DOUBLE_EQ(cmt::entropy_standard_error(buf), 0.0);
}

TEST(EntropyEstimate, IsotropicNormal2d) {
  const cmt::MixtureModel model({1.0}, {Eigen::Vector2d::Zero()}, {Eigen::Matrix2d::Identity() * 4.0});
  const cmt::LogDensity target(2, [](std::span<const double>) { return 0.0; });
  const auto buf = cmt::draw_buffer(model, target, 100000, 9);
  const double h = std::log(2.0 * std::numbers::pi * std::numbers::e * 4.0);
  EXPECT_NEAR(h, 4.2242, 1e-4);
  EXPECT_NEAR(cmt::entropy_estimate(buf), h, 3.0 * cmt::entropy_standard_error(buf));
}

TEST(EntropyEstimate, StandardErrorShrinksLikeInverseRootN) {
  const auto model = normal_1d();
  const cmt::LogDensity target(1, [](std::span<const double>) { return 0.0; });
  std::vector<double> se;
  for (const std::size_t n : {1000u, 10000u, 100000u}) se.push_back(cmt::entropy_standard_error(cmt::draw_buffer(model, target, n, n)));
  // Var(log q) = 1/2 for a standard normal, so se = sqrt(0.5 / N).
  EXPECT_NEAR(se[0] / se[1], std::sqrt(10.0), 0.5);
  EXPECT_NEAR(se[1] / se[2], std::sqrt(10.0), 0.5);
  EXPECT_NEAR(se[2], std::sqrt(0.5 / 1e5), 2e-4);
}

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(cmt::derive_seed(1, {2, 3}), cmt::derive_seed(1, {2, 3}));
  EXPECT_NE(cmt::derive_seed(1, {2, 3}), cmt::derive_seed(1, {3, 2}));
  EXPECT_NE(cmt::derive_seed(1, {2}), cmt::derive_seed(2, {2}));
  // The engine is the standard's mt19937_64, whose output sequence is fixed.
  std::mt19937_64 ref;
  for (int i = 0; i < 9999; ++i) ref();
  EXPECT_EQ(ref(), 9981545732273789042ULL);
}

}  // namespace
