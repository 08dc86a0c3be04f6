#include "iteravg/averaging.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace iteravg;

namespace {

template <class F>
void expect_condition(F f, const std::string& condition) {
  try {
    f();
    FAIL() << "expected " << condition;
  } catch (const PreconditionError& e) {
    EXPECT_EQ(e.condition(), condition);
  }
}

void expect_valid(const WeightScheme& s) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    const Vector c = s.cumulative_spectrum(k);
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE(c.maxCoeff(), 1.0);
    if (k > 0) {
      EXPECT_GE((c - s.cumulative_spectrum(k - 1)).minCoeff(), -1e-15);
      EXPECT_LT((s.cumulative_spectrum(k - 1) + s.increment_spectrum(k) - c).cwiseAbs().maxCoeff(), 1e-15);
    } else {
      EXPECT_EQ(s.increment_spectrum(0), c);
    }
  }
}

}  // namespace

TEST(Weights, SgdConstantRate) {
  const double gamma = 0.1 / 1.01;
  const auto s = weights_sgd_adaptive(RateSequence::constant(0.1), 0.1, 500);
  EXPECT_NEAR(s.cumulative(0), 0.1 * gamma, 1e-16);
  EXPECT_NEAR(s.cumulative(0), 0.0099010, 1e-7);
  EXPECT_NEAR(s.cumulative(9), 1 - std::pow(1 - 0.1 * gamma, 10), 1e-15);
  EXPECT_NEAR(s.cumulative(9), 0.09471, 1e-5);
  expect_valid(s);
  // tail rate 1 - lambda gamma
  EXPECT_NEAR((1 - s.cumulative(500)) / (1 - s.cumulative(499)), 1 - 0.1 * gamma, 1e-12);
}

TEST(Weights, SgdAdaptive) {
  const auto s = weights_sgd_adaptive(RateSequence::sequence({0.1, 0.05, 0.1}), 0.1, 2);
  const double g0 = 0.1 / 1.01, g1 = 0.05 / 1.005;
  EXPECT_NEAR(g1, 0.0497512, 1e-7);
  EXPECT_NEAR(s.cumulative(1), 1 - (1 - 0.1 * g0) * (1 - 0.1 * g1), 1e-15);
  EXPECT_NEAR(s.cumulative(1), 0.0148269, 1e-7);
  expect_valid(s);
}

TEST(Weights, SgdLimits) {
  // lambda gamma -> 1 puts all mass on the first iterate
  const auto s = weights_sgd_adaptive(RateSequence::constant(0.1), 1e9, 3);
  EXPECT_NEAR(s.cumulative(0), 1.0, 1e-8);
  expect_condition([] { weights_sgd_adaptive(RateSequence::constant(0.1), 0.0, 3); }, "nonpositive_lambda");
}

TEST(Weights, Nsgd) {
  const double eta = 0.1, lambda = 0.1, alpha = 0.05, gamma = eta / (1 + lambda * eta);
  const double c = (1 - std::sqrt(gamma * (alpha + lambda))) / (1 - std::sqrt(eta * alpha));
  EXPECT_NEAR(c, 0.9449515, 1e-7);
  const auto s = weights_nsgd(eta, lambda, alpha, 500);
  EXPECT_EQ(s.cumulative(0), 0.0);
  EXPECT_NEAR(s.cumulative(1), 0.009901, 1e-6);
  EXPECT_NEAR(s.cumulative(2), 0.0644045, 1e-7);
  EXPECT_NEAR(s.cumulative(2), 1 - gamma / eta * c, 1e-15);
  EXPECT_GT(s.cumulative(500), 1 - 1e-10);
  expect_valid(s);
  EXPECT_NEAR((1 - s.cumulative(100)) / (1 - s.cumulative(99)), c, 1e-9);
  expect_condition([] { weights_nsgd(0.1, 0.0, 0.05, 3); }, "nonpositive_lambda");
  expect_condition([] { weights_nsgd(0.1, 0.1, 10.0, 3); }, "momentum_out_of_range");
}

TEST(Weights, General) {
  const auto s = weights_general(1.0, 0.5, 2);
  EXPECT_DOUBLE_EQ(s.cumulative(0), 0.5);
  EXPECT_DOUBLE_EQ(s.cumulative(1), 0.75);
  EXPECT_DOUBLE_EQ(s.cumulative(2), 0.875);
  expect_valid(s);
  EXPECT_NEAR(weights_general(1.0, 1e-9, 1).cumulative(0), 1.0, 1e-8);
  EXPECT_TRUE(weights_general(1.0, 1.0 - 1e-12, 100).ill_conditioned());
  EXPECT_FALSE(s.ill_conditioned());
  expect_condition([] { weights_general(1.0, 1.0, 2); }, "bad_rate_pair");
}

TEST(Weights, KernelEigenvalues) {
  Matrix k(2, 2);
  k << 3, 0, 0, 1;
  const auto kp = KernelProblem::make(k, Vector::Ones(2));
  const auto s = weights_kernel(kp, RateSequence::constant(0.1), 0.0, 1.0, 10);
  const Vector p0 = s.cumulative_spectrum(0);
  // eigenvalues ascending: mu = 1 then 3
  EXPECT_NEAR(p0(0), 0.0909091, 1e-7);
  EXPECT_NEAR(p0(1), 0.230769, 1e-6);
  expect_valid(s);
  expect_condition([&] { weights_kernel(kp, RateSequence::constant(0.1), 1.0, 1.0, 2); },
                   "lambda_hat_not_above_lambda");
}

TEST(Weights, KernelNullDirectionNeverRegularizes) {
  Matrix k(2, 2);
  k << 1, 1, 1, 1;
  const auto kp = KernelProblem::make(k, Vector::Ones(2));
  const auto s = weights_kernel(kp, RateSequence::constant(0.1), 0.0, 2.0, 50);
  for (std::size_t i = 0; i <= 50; ++i) EXPECT_EQ(s.cumulative_spectrum(i)(0), 0.0);
  const auto big = weights_kernel(kp, RateSequence::constant(0.1), 0.0, 1e12, 1);
  EXPECT_NEAR(big.cumulative_spectrum(0)(1), 1.0, 1e-9);
}

TEST(Weights, KernelSchemeCommutesWithGram) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix f(6, 9);
  for (Index j = 0; j < 9; ++j)
    for (Index i = 0; i < 6; ++i) f(i, j) = n(rng);
  const Matrix k = f * f.transpose() / 9.0;
  const auto kp = KernelProblem::make(k, Vector::Ones(6));
  const auto s = weights_kernel(kp, RateSequence::constant(0.05), 0.0, 1.5, 20);
  for (std::size_t i : {0u, 5u, 20u}) {
    const Matrix p = s.basis() * s.cumulative_spectrum(i).asDiagonal() * s.basis().transpose();
    EXPECT_LT((p * k - k * p).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Weights, Geometric) {
  const auto s = weights_geometric(0.5, 2);
  EXPECT_NEAR(s.increment(0), 4.0 / 7.0, 1e-16);
  EXPECT_NEAR(s.increment(1), 2.0 / 7.0, 1e-16);
  EXPECT_NEAR(s.increment(2), 1.0 / 7.0, 1e-16);
  EXPECT_NEAR(s.cumulative(2), 1.0, 1e-16);
  for (double p : {0.9999, 0.999, 0.99, 0.9}) {
    const auto g = weights_geometric(p, 100);
    EXPECT_NEAR(g.cumulative(100), 1.0, 1e-15);
    expect_valid(g);
  }
  EXPECT_NEAR(weights_geometric(1.0 - 1e-12, 5).increment(0), 1.0, 1e-11);
  expect_condition([] { weights_geometric(0.0, 2); }, "bad_probability");
  expect_condition([] { weights_geometric(1.5, 2); }, "bad_probability");
}

TEST(Weights, SchemeCsv) {
  std::ostringstream os;
  write_scheme_csv(weights_general(1.0, 0.5, 1), os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "k,p_k,P_k");
}

TEST(RunningAverageTest, Basics) {
  Vector w(2);
  w << 3, -1;
  RunningAverage one(2);
  one.update(0, w, 0.25);
  EXPECT_EQ(one.finalize(), w);

  RunningAverage two(2);
  two.update(0, Vector::Zero(2), 0.5);
  two.update(1, w, 0.5);
  EXPECT_EQ(two.finalize(), w / 2);

  RunningAverage bad(2);
  expect_condition([&] { bad.finalize(); }, "zero_total_weight");
  expect_condition([&] { bad.update(1, w, 0.1); }, "out_of_order_update");
  expect_condition([&] { bad.update(0, w, -0.1); }, "negative_weight");
}

TEST(RunningAverageTest, UniformWeightsGiveMean) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<Vector> ws;
  Vector sum = Vector::Zero(5);
  RunningAverage avg(5);
  for (std::size_t k = 0; k < 200; ++k) {
    Vector w(5);
    for (Index i = 0; i < 5; ++i) w(i) = n(rng);
    sum += w;
    avg.update(k, w, 1.0 / 200.0);
  }
  EXPECT_LT((avg.finalize() - sum / 200.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RunningAverageTest, StreamingMatchesBatchOnToyPath) {
  RunOptions o;
  o.steps = 500;
  const auto path = sgd_run(make_toy_quadratic(), Regularizer::none(), RateSequence::constant(0.1), o);
  const auto s = weights_sgd_adaptive(RateSequence::constant(0.1), 0.1, 500);
  RunningAverage avg(2);
  for (std::size_t k = 0; k < path.size(); ++k) avg.update(k, path.at(k), s.increment(k));
  // batch oracle: sum with explicit increments P_k - P_{k-1} from the closed form
  const double r = 1 - 0.1 * (0.1 / 1.01);
  Vector direct = Vector::Zero(2);
  double total = 0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double p = (1 - std::pow(r, k + 1)) - (k == 0 ? 0.0 : 1 - std::pow(r, k));
    direct += p * path.at(k);
    total += p;
  }
  EXPECT_LT((avg.finalize() - direct / total).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((avg.finalize() - average_path(path, s).averages.back()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RunningAverageTest, SpectralZeroDirectionFinalizesToZero) {
  const Matrix basis = Matrix::Identity(2, 2);
  SpectralRunningAverage avg(basis);
  Vector w(2), p(2);
  w << 2, 5;
  p << 0.5, 0.0;
  avg.update(0, w, p);
  const Vector out = avg.finalize();
  EXPECT_EQ(out(0), 2.0);
  EXPECT_EQ(out(1), 0.0);
}

TEST(AveragePath, ZeroWeightIndexReportsIterate) {
  RunOptions o;
  o.steps = 5;
  const auto path = nsgd_run(make_toy_quadratic(), Regularizer::none(), 0.1, 0.05, o);
  const auto avg = average_path(path, weights_nsgd(0.1, 0.1, 0.05, 5));
  EXPECT_EQ(avg.averages[0], path.at(0));
  EXPECT_EQ(avg.weighted_sums[0].norm(), 0.0);
  expect_condition([&] { average_path(path, weights_nsgd(0.1, 0.1, 0.05, 3)); }, "scheme_too_short");
}
