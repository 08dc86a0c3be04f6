#include "iteravg/optimizers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iteravg/path_io.hpp"

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

RunOptions det(std::size_t steps) {
  RunOptions o;
  o.steps = steps;
  return o;
}

QuadraticProblem data_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Matrix x(40, 3), y(40, 2);
  for (Index j = 0; j < 3; ++j)
    for (Index i = 0; i < 40; ++i) x(i, j) = n(rng);
  for (Index j = 0; j < 2; ++j)
    for (Index i = 0; i < 40; ++i) y(i, j) = n(rng);
  return QuadraticProblem::from_data(x, y);
}

}  // namespace

TEST(Schedule, CouplingRule) {
  const ConvexityBounds b{0.1, 1.0};
  const auto s = make_schedule(RateSequence::constant(0.1), 0.1, b);
  EXPECT_NEAR(s.gamma.at(0), 0.1 / 1.01, 1e-16);
  EXPECT_NEAR(s.gamma.at(0), 0.0990099, 1e-7);
  EXPECT_NEAR(1 - 0.1 * s.gamma.at(0), s.gamma.at(0) / 0.1, 1e-14);

  const auto mnist = make_schedule(RateSequence::constant(0.01), 4.0, {0.0, 30.0});
  EXPECT_NEAR(mnist.gamma.at(7), 1.0 / 104.0, 1e-17);

  const auto zero = make_schedule(RateSequence::sequence({0.1, 0.2, 0.3}), 0.0, b);
  EXPECT_EQ(zero.gamma, zero.eta);
}

TEST(Schedule, Rejections) {
  const ConvexityBounds b{0.1, 1.0};
  expect_condition([&] { make_schedule(RateSequence::constant(1.0), 0.1, b); }, "eta_above_inverse_beta");
  expect_condition([&] { make_schedule(RateSequence::constant(0.1), -1.0, b); }, "negative_lambda");
  expect_condition([&] { make_schedule(RateSequence::sequence({0.1, 0.2}), 0.1, b, OptimizerKind::Nsgd); },
                   "nsgd_constant_rate");
  expect_condition([&] { make_schedule(RateSequence::constant(0.1), 0.1, b, OptimizerKind::Sgd, 0.2); },
                   "eta_below_floor");
}

TEST(Sgd, ZeroStepsIsOrigin) {
  const auto p = sgd_run(make_toy_quadratic(), Regularizer::none(), RateSequence::constant(0.1), det(0));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.at(0).norm(), 0.0);
}

TEST(Sgd, ToyPathMatchesClosedForm) {
  const auto toy = make_toy_quadratic();
  const auto p = sgd_run(toy, Regularizer::none(), RateSequence::constant(0.1), det(500));
  // w_K = (I - (I - eta Sigma)^K) w_*
  Eigen::SelfAdjointEigenSolver<Matrix> es(toy.sigma);
  const Vector decay = (1.0 - 0.1 * es.eigenvalues().array()).pow(500.0).matrix();
  const Vector expected =
      Vector::Ones(2) - es.eigenvectors() * decay.asDiagonal() * es.eigenvectors().transpose() * Vector::Ones(2);
  EXPECT_LT((p.back() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sgd, RegularizedConvergesGeometrically) {
  const auto toy = make_toy_quadratic();
  const double lambda = 0.1, gamma = coupled_rate(0.1, lambda);
  const auto p = sgd_run(toy, Regularizer::l2(lambda), RateSequence::constant(gamma), det(500));
  const Vector target = (toy.sigma + lambda * Matrix::Identity(2, 2)).inverse() * toy.a;
  for (std::size_t k = 0; k < p.size(); ++k) {
    EXPECT_LE((p.at(k) - target).norm(), std::pow(1 - gamma * (0.1 + lambda), k) * target.norm() + 1e-10);
  }
}

TEST(Sgd, LossDecreasesForGdAndPgd) {
  const auto toy = make_toy_quadratic();
  const Problem p = toy;
  const auto gd = sgd_run(p, Regularizer::none(), RateSequence::constant(0.9), det(200));
  const auto pgd = psgd_run(p, Regularizer::generalized_l2(0.0, toy.sigma), RateSequence::constant(0.9), det(200));
  for (const auto* path : {&gd, &pgd}) {
    for (std::size_t k = 0; k + 1 < path->size(); ++k) {
      EXPECT_LE(eval_loss_grad(p, Regularizer::none(), path->at(k + 1)).loss,
                eval_loss_grad(p, Regularizer::none(), path->at(k)).loss + 1e-15);
    }
  }
}

TEST(Sgd, SameSeedReplaysExactly) {
  const Problem p = data_problem(1);
  RunOptions o = det(50);
  o.noise = MiniBatchNoise{5};
  o.seed = 42;
  const auto a = sgd_run(p, Regularizer::l2(0.1), RateSequence::constant(0.05), o);
  const auto b = sgd_run(p, Regularizer::l2(0.1), RateSequence::constant(0.05), o);
  EXPECT_TRUE(a == b);
  std::ostringstream sa, sb;
  write_path(a, sa);
  write_path(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
  o.seed = 43;
  EXPECT_FALSE(a == sgd_run(p, Regularizer::l2(0.1), RateSequence::constant(0.05), o));
}

TEST(Sgd, FullSizeBatchIsDeterministic) {
  const Problem p = data_problem(2);
  RunOptions o = det(30);
  o.noise = MiniBatchNoise{40};
  o.seed = 9;
  const auto a = sgd_run(p, Regularizer::none(), RateSequence::constant(0.05), o);
  const auto b = sgd_run(p, Regularizer::none(), RateSequence::constant(0.05), det(30));
  EXPECT_EQ(a.iterates, b.iterates);
}

TEST(Sgd, DivergenceIsReported) {
  EXPECT_THROW(sgd_run(make_toy_quadratic(), Regularizer::none(), RateSequence::constant(25.0), det(500)),
               NumericalError);
}

TEST(Psgd, NewtonPreconditionerIsExactRelaxation) {
  const auto toy = make_toy_quadratic();
  const auto p = psgd_run(toy, Regularizer::generalized_l2(0.0, toy.sigma), RateSequence::constant(0.1), det(500));
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    const Vector expected = 0.9 * p.at(k) + 0.1 * Vector::Ones(2);
    EXPECT_LT((p.at(k + 1) - expected).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_LT((p.back() - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Psgd, IdentityPreconditionerEqualsSgd) {
  const Problem p = data_problem(3);
  for (const Noise& noise : {Noise{MiniBatchNoise{7}}, Noise{SphereNoise{0.3}}, Noise{Deterministic{}}}) {
    RunOptions o = det(40);
    o.noise = noise;
    o.seed = 5;
    const auto a = sgd_run(p, Regularizer::none(), RateSequence::constant(0.05), o);
    const auto b = psgd_run(p, Regularizer::generalized_l2(0.0, Matrix::Identity(3, 3)), RateSequence::constant(0.05), o);
    EXPECT_EQ(a.iterates, b.iterates) << describe(noise);
  }
}

TEST(Psgd, NeedsPreconditioner) {
  expect_condition(
      [] { psgd_run(make_toy_quadratic(), Regularizer::l2(0.1), RateSequence::constant(0.1), det(3)); },
      "psgd_needs_q");
}

TEST(Nsgd, ToyReachesMinimizer) {
  const auto p = nsgd_run(make_toy_quadratic(), Regularizer::none(), 0.1, 0.05, det(500));
  EXPECT_EQ(p.at(0).norm(), 0.0);
  EXPECT_EQ(p.at(1).norm(), 0.0);
  EXPECT_LT((p.back() - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nsgd, OneDimensionalIncrements) {
  // Sigma = 1, a = 1, alpha = 0.5, eta = 0.5: tau = 1/3
  const auto q = QuadraticProblem::from_moments(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  const auto p = nsgd_run(q, Regularizer::none(), 0.5, 0.5, det(4));
  EXPECT_DOUBLE_EQ(p.at(2)(0) - p.at(1)(0), 0.5);
  EXPECT_NEAR(p.at(3)(0) - p.at(2)(0), 1.0 / 3.0, 1e-15);
  // by hand: v = 5/6 + (1/3)(1/3), w_4 = v - 0.5 (v - 1)
  const double v = 5.0 / 6.0 + 1.0 / 9.0;
  EXPECT_NEAR(p.at(4)(0), v - 0.5 * (v - 1.0), 1e-15);
}

TEST(Nsgd, MomentumVanishesAtBoundary) {
  // eta * alpha just below 1 makes tau ~ 0: one plain GD step from v_k = w_k
  const auto q = QuadraticProblem::from_moments(Matrix::Ones(1, 1) * 0.5, Matrix::Ones(1, 1));
  const double eta = 1.0, alpha = 1.0 - 1e-12;
  const auto p = nsgd_run(q, Regularizer::none(), eta, alpha, det(5));
  for (std::size_t k = 2; k + 1 < p.size(); ++k) {
    const double gd = p.at(k)(0) - eta * (0.5 * p.at(k)(0) - 1.0);
    EXPECT_NEAR(p.at(k + 1)(0), gd, 1e-5);
  }
  expect_condition([&] { nsgd_run(q, Regularizer::none(), 1.0, 1.0, det(5)); }, "momentum_out_of_range");
}

TEST(Kernel, ShiftedRunMatchesMatrixRate) {
  Matrix k(2, 2);
  k << 2, 1, 1, 2;
  Vector y(2);
  y << 1, 0;
  const auto kp = KernelProblem::make(k, y);
  const double eta = 0.05, shift = 0.7;
  const auto p = kernel_gd_run(kp, 0.7, RateSequence::constant(eta), 3, shift);
  // gamma = eta (I + shift eta K)^-1 applied to the regularized gradient
  Vector w = Vector::Zero(2);
  const Matrix gamma = eta * (Matrix::Identity(2, 2) + shift * eta * k).inverse();
  for (int i = 0; i < 3; ++i) w -= gamma * (k * (k * w - y) + 0.7 * k * w);
  EXPECT_LT((p.back() - w).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PathIo, RoundTripIsBitExact) {
  const Problem p = data_problem(4);
  RunOptions o = det(20);
  o.noise = SphereNoise{0.1};
  o.seed = 77;
  const auto a = nsgd_run(p, Regularizer::l2(0.3), 0.02, 0.1, o);
  std::stringstream ss;
  write_path(a, ss);
  const auto b = read_path(ss);
  EXPECT_TRUE(a == b);
  std::istringstream bad("{\"format\":\"something-else\"}\n");
  EXPECT_THROW(read_path(bad), FormatError);
}
