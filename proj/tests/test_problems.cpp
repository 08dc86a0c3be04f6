#include "iteravg/problems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "iteravg/linalg.hpp"

using namespace iteravg;

namespace {

QuadraticProblem diag_toy() {
  Matrix s(2, 2);
  s << 0.1, 0, 0, 1;
  Matrix a(2, 1);
  a << 0.1, 1;
  return QuadraticProblem::from_moments(s, a);
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = scale * n(rng);
  return m;
}

Matrix random_labels(Index n, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix y = Matrix::Zero(n, c);
  for (Index i = 0; i < n; ++i) {
    if (c == 1) {
      y(i, 0) = static_cast<double>(rng() % 2);
    } else {
      y(i, static_cast<Index>(rng() % static_cast<std::uint64_t>(c))) = 1.0;
    }
  }
  return y;
}

template <class F>
void expect_throws_condition(F f, const std::string& condition) {
  try {
    f();
    FAIL() << "expected " << condition;
  } catch (const PreconditionError& e) {
    EXPECT_EQ(e.condition(), condition);
  }
}

}  // namespace

TEST(Problems, GradientVanishesAtMinimizer) {
  const Problem p = diag_toy();
  const Vector g = eval_grad(p, Regularizer::none(), vec({1, 1}));
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Problems, RidgeGradientByHand) {
  const Problem p = diag_toy();
  const Vector g = eval_grad(p, Regularizer::l2(0.1), Vector::Zero(2));
  EXPECT_NEAR(g(0), -0.1, 1e-15);
  EXPECT_NEAR(g(1), -1.0, 1e-15);
  // (Sigma + lambda I)^-1 a by hand: 0.1/0.2, 1/1.1
  const Vector at_min = eval_grad(p, Regularizer::l2(0.1), vec({0.5, 1.0 / 1.1}));
  EXPECT_LT(at_min.cwiseAbs().maxCoeff(), 1e-15);
  const Vector rounded = eval_grad(p, Regularizer::l2(0.1), vec({0.5, 0.909091}));
  EXPECT_LT(rounded.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Problems, L1RejectedByGradientConsumers) {
  const Problem p = diag_toy();
  expect_throws_condition([&] { eval_grad(p, Regularizer::l1(0.1), Vector::Zero(2)); }, "l1_not_smooth");
  expect_throws_condition([&] { smoothness(p, Regularizer::l1(0.1)); }, "l1_not_smooth");
}

TEST(Problems, DimensionMismatch) {
  const Problem p = diag_toy();
  expect_throws_condition([&] { eval_grad(p, Regularizer::none(), Vector::Zero(3)); }, "dimension_mismatch");
}

TEST(Problems, FiniteDifferencesMatchGradient) {
  const Matrix x = random_matrix(12, 4, 1, 0.7);
  std::vector<std::pair<Problem, Regularizer>> cases;
  cases.emplace_back(QuadraticProblem::from_data(x, random_matrix(12, 3, 2)), Regularizer::none());
  cases.emplace_back(QuadraticProblem::from_data(x, random_matrix(12, 1, 3)), Regularizer::l2(0.3));
  cases.emplace_back(LogisticProblem::make(x, random_labels(12, 1, 4), 0.5), Regularizer::none());
  cases.emplace_back(LogisticProblem::make(x, random_labels(12, 3, 5), 1.0), Regularizer::l2(0.2));
  Matrix q = random_matrix(4, 4, 6);
  q = q * q.transpose() + Matrix::Identity(4, 4);
  cases.emplace_back(QuadraticProblem::from_data(x, random_matrix(12, 1, 7)), Regularizer::generalized_l2(0.4, q));
  const Matrix f = random_matrix(5, 8, 8);
  cases.emplace_back(KernelProblem::make(f * f.transpose() / 8.0, random_matrix(5, 1, 9).col(0)),
                     Regularizer::l2(0.7));

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  const double h = 1e-5;
  for (const auto& [p, reg] : cases) {
    const Index d = problem_dim(p);
    for (int trial = 0; trial < 20; ++trial) {
      Vector w(d), u(d);
      for (Index i = 0; i < d; ++i) {
        w(i) = n(rng);
        u(i) = n(rng);
      }
      u.normalize();
      const double lp = eval_loss_grad(p, reg, w + h * u).loss;
      const double lm = eval_loss_grad(p, reg, w - h * u).loss;
      const double directional = eval_loss_grad(p, reg, w).grad.dot(u);
      EXPECT_LE(std::abs((lp - lm) / (2 * h) - directional), 1e-5);
    }
  }
}

TEST(Problems, FullBatchEqualsFullGradient) {
  const Matrix x = random_matrix(6, 3, 11);
  const Problem quad = QuadraticProblem::from_data(x, random_matrix(6, 2, 12));
  const Problem logit = LogisticProblem::make(x, random_labels(6, 3, 13), 0.1);
  const std::vector<Index> all = {0, 1, 2, 3, 4, 5};
  const Vector w = random_matrix(6, 1, 14).col(0);
  for (const Problem* p : {&quad, &logit}) {
    const Vector full = eval_grad(*p, Regularizer::l2(0.3), w.head(problem_dim(*p)));
    const Vector sg = stochastic_grad(*p, Regularizer::l2(0.3), w.head(problem_dim(*p)), all);
    EXPECT_LT((full - sg).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Problems, IdenticalSamplesGiveFullGradient) {
  Matrix x(2, 2);
  x << 0.3, -1.2, 0.3, -1.2;
  Matrix y(2, 1);
  y << 0.5, 0.5;
  const Problem p = QuadraticProblem::from_data(x, y);
  const Vector w = vec({0.4, 0.9});
  const std::vector<Index> one = {1};
  EXPECT_LT((stochastic_grad(p, Regularizer::none(), w, one) - eval_grad(p, Regularizer::none(), w)).norm(), 1e-15);
}

TEST(Problems, ExhaustiveBatchesAverageToFullGradient) {
  const Matrix x = random_matrix(4, 3, 15);
  const Problem quad = QuadraticProblem::from_data(x, random_matrix(4, 1, 16));
  const Problem logit = LogisticProblem::make(x, random_labels(4, 1, 17), 0.2);
  const Vector w = vec({0.2, -0.4, 1.1});
  for (const Problem* p : {&quad, &logit}) {
    // b = 1: the four single-sample gradients
    Vector mean = Vector::Zero(3);
    for (Index i = 0; i < 4; ++i) {
      const std::vector<Index> b = {i};
      mean += stochastic_grad(*p, Regularizer::l2(0.5), w, b) / 4.0;
    }
    EXPECT_LT((mean - eval_grad(*p, Regularizer::l2(0.5), w)).norm(), 1e-12);
    // b = 2 with replacement: all 16 ordered pairs
    Vector mean2 = Vector::Zero(3);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) {
        const std::vector<Index> b = {i, j};
        mean2 += stochastic_grad(*p, Regularizer::none(), w, b) / 16.0;
      }
    EXPECT_LT((mean2 - eval_grad(*p, Regularizer::none(), w)).norm(), 1e-12);
  }
}

TEST(Problems, KernelHasNoMinibatchGradient) {
  const Problem p = KernelProblem::make(Matrix::Identity(2, 2), Vector::Ones(2));
  const std::vector<Index> b = {0};
  expect_throws_condition([&] { stochastic_grad(p, Regularizer::none(), Vector::Zero(2), b); }, "no_sample_data");
}

TEST(Problems, ConvexityBoundsOfDiagonal) {
  const auto b = convexity_bounds(diag_toy(), Regularizer::none());
  EXPECT_NEAR(b.alpha, 0.1, 1e-15);
  EXPECT_NEAR(b.beta, 1.0, 1e-15);
  const auto r = convexity_bounds(diag_toy(), Regularizer::l2(0.5));
  EXPECT_NEAR(r.alpha, 0.6, 1e-15);
  EXPECT_NEAR(r.beta, 1.5, 1e-15);
}

TEST(Problems, PreconditionedBoundsWithQEqualSigma) {
  const Matrix g = random_matrix(4, 4, 18);
  const Matrix s = g * g.transpose() + 0.1 * Matrix::Identity(4, 4);
  const auto quad = QuadraticProblem::from_moments(s, random_matrix(4, 1, 19));
  const auto b = preconditioned_bounds(quad, s);
  EXPECT_NEAR(b.alpha, 1.0, 1e-10);
  EXPECT_NEAR(b.beta, 1.0, 1e-10);
}

TEST(Problems, LogisticStrongConvexityIsBaseRidge) {
  const Matrix x = random_matrix(30, 5, 20);
  const auto lp = LogisticProblem::make(x, random_labels(30, 1, 21), 1.0);
  const auto b = convexity_bounds(lp, Regularizer::none());
  EXPECT_EQ(b.alpha, 1.0);
  // binary: sigmoid'' <= 1/4
  const Matrix cov = x.transpose() * x / 30.0;
  Eigen::EigenSolver<Matrix> es(cov);  // general solver as an independent oracle
  EXPECT_NEAR(b.beta, 1.0 + es.eigenvalues().real().maxCoeff() / 4.0, 1e-10);

  const auto zero = LogisticProblem::make(x, random_labels(30, 1, 21), 0.0);
  EXPECT_THROW(convexity_bounds(zero, Regularizer::none()), NotStronglyConvex);
}

TEST(Problems, CurvatureBoundsHoldOnRandomPairs) {
  const Matrix x = random_matrix(25, 4, 22);
  std::vector<Problem> problems = {QuadraticProblem::from_data(x, random_matrix(25, 2, 23)),
                                   LogisticProblem::make(x, random_labels(25, 1, 24), 0.3),
                                   LogisticProblem::make(x, random_labels(25, 3, 25), 0.3)};
  std::mt19937_64 rng(26);
  std::normal_distribution<double> n;
  for (const auto& p : problems) {
    const auto b = convexity_bounds(p, Regularizer::l2(0.05));
    const bool exact = std::holds_alternative<QuadraticProblem>(p);
    const double slack = exact ? 1e-12 : 1e-8;
    const Index d = problem_dim(p);
    for (int t = 0; t < 100; ++t) {
      Vector w(d), v(d);
      for (Index i = 0; i < d; ++i) {
        w(i) = 2 * n(rng);
        v(i) = 2 * n(rng);
      }
      const double inner =
          (eval_grad(p, Regularizer::l2(0.05), w) - eval_grad(p, Regularizer::l2(0.05), v)).dot(w - v);
      const double dist2 = (w - v).squaredNorm();
      EXPECT_GE(inner, b.alpha * dist2 - slack * dist2);
      EXPECT_LE(inner, b.beta * dist2 + slack * dist2);
    }
  }
}

TEST(Problems, ToyProblemConstruction) {
  const auto toy = make_toy_quadratic();
  const double c = 0.5, s = std::sqrt(3.0) / 2.0;  // theta = pi/3
  Matrix u(2, 2);
  u << c, -s, s, c;
  const Matrix expected = u * Vector(vec({0.1, 1.0})).asDiagonal() * u.transpose();
  EXPECT_LT((toy.sigma - expected).cwiseAbs().maxCoeff(), 1e-15);
  const Vector w = toy.sigma.fullPivLu().solve(toy.a);
  EXPECT_LT((w - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Problems, NoRotationGivesDiagonal) {
  const auto p = make_synthetic_quadratic(2, 0.1, 1.0, PlaneRotation{0.0}, Vector::Ones(2));
  EXPECT_EQ(p.sigma(0, 1), 0.0);
  EXPECT_EQ(p.sigma(0, 0), 0.1);
  EXPECT_EQ(p.sigma(1, 1), 1.0);
}

TEST(Problems, SyntheticSpectrumMatches) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = make_synthetic_quadratic(6, 0.2, 3.0, RandomRotation{seed}, Vector::Ones(6));
    Eigen::EigenSolver<Matrix> es(p.sigma);
    std::vector<double> got;
    for (Index i = 0; i < 6; ++i) got.push_back(es.eigenvalues()(i).real());
    std::sort(got.begin(), got.end());
    for (Index i = 0; i < 6; ++i) EXPECT_NEAR(got[static_cast<std::size_t>(i)], 0.2 + 2.8 * i / 5.0, 1e-12);
  }
  expect_throws_condition(
      [] { make_synthetic_quadratic(2, 1.0, 0.5, PlaneRotation{0.0}, Vector::Ones(2)); }, "bad_spectrum");
}

TEST(Problems, JacobiAgreesWithGeneralSolver) {
  const Matrix g = random_matrix(7, 7, 27);
  const Matrix a = g + g.transpose();
  const auto je = jacobi_eigen(a);
  EXPECT_LT((je.vectors * je.values.asDiagonal() * je.vectors.transpose() - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((je.vectors.transpose() * je.vectors - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-12);
  for (Index i = 0; i + 1 < 7; ++i) EXPECT_LE(je.values(i), je.values(i + 1));
}

TEST(Problems, FingerprintDistinguishesProblems) {
  const auto a = problem_fingerprint(make_toy_quadratic());
  EXPECT_EQ(a, problem_fingerprint(make_toy_quadratic()));
  EXPECT_NE(a, problem_fingerprint(diag_toy()));
}
