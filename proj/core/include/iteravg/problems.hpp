#pragma once

#include "iteravg/common.hpp"
#include "iteravg/linalg.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>

namespace iteravg {

/// L(W) = 1/2 tr(W^T Sigma W) - tr(W^T A) + offset, with W of shape
/// features x outputs, flattened column-major into one parameter vector.
/// Built either from moments or from raw data (Sigma = X^T X / n,
/// A = X^T Y / n); raw data is kept so minibatch gradients can be formed.
struct QuadraticProblem {
  Matrix sigma;
  Matrix a;
  double offset = 0.0;
  Matrix x;  // empty unless built from data
  Matrix y;
  std::optional<Vector> w_star;

  static QuadraticProblem from_moments(Matrix sigma, Matrix a, double offset = 0.0);
  static QuadraticProblem from_data(Matrix x, Matrix y);

  Index features() const { return sigma.rows(); }
  Index outputs() const { return a.cols(); }
  Index dim() const { return sigma.rows() * a.cols(); }
  Index samples() const { return x.rows(); }
  bool has_data() const { return x.size() > 0; }
};

/// Mean cross-entropy plus (base_ridge/2)||W||^2. A single label column is
/// binary logistic with sigmoid link; c >= 2 columns are softmax over one-hot
/// targets.
struct LogisticProblem {
  Matrix x;
  Matrix y;
  double base_ridge = 1.0;

  static LogisticProblem make(Matrix x, Matrix y, double base_ridge);

  Index features() const { return x.cols(); }
  Index outputs() const { return y.cols(); }
  Index dim() const { return x.cols() * y.cols(); }
  Index samples() const { return x.rows(); }
  bool binary() const { return y.cols() == 1; }
};

/// Kernel least squares over dual coefficients: 1/2 ||y - K c||^2.
/// The eigendecomposition of the Gram matrix is cached at construction.
struct KernelProblem {
  Matrix gram;
  Vector y;
  SymmetricEigen eigen;

  static KernelProblem make(Matrix gram, Vector y);

  Index dim() const { return gram.rows(); }
};

using Problem = std::variant<QuadraticProblem, LogisticProblem, KernelProblem>;

Index problem_dim(const Problem& p);
std::string problem_fingerprint(const Problem& p);

enum class RegKind { None, L2, GeneralizedL2, L1 };

/// Regularizer (lambda/2)||w||^2, (lambda/2) w^T Q w (Q applied per output
/// column) or lambda ||w||_1. For kernel problems L2 means (lambda/2) c^T K c.
class Regularizer {
 public:
  static Regularizer none();
  static Regularizer l2(double lambda);
  static Regularizer generalized_l2(double lambda, Matrix q);
  static Regularizer l1(double lambda);

  RegKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  const Matrix& q() const;
  /// Solves Q X = B column-wise via the cached Cholesky factor.
  Matrix solve_q(const Matrix& b) const;

 private:
  RegKind kind_ = RegKind::None;
  double lambda_ = 0.0;
  std::shared_ptr<const Matrix> q_;
  std::shared_ptr<const Eigen::LLT<Matrix>> q_llt_;
};

struct ConvexityBounds {
  double alpha;
  double beta;
};

struct LossGrad {
  double loss;
  Vector grad;
};

LossGrad eval_loss_grad(const Problem& p, const Regularizer& reg, const Vector& w);
Vector eval_grad(const Problem& p, const Regularizer& reg, const Vector& w);

/// Minibatch gradient over the given row indices (duplicates allowed).
Vector stochastic_grad(const Problem& p, const Regularizer& reg, const Vector& w,
                       std::span<const Index> batch);

/// Smoothness constant of the regularized objective.
double smoothness(const Problem& p, const Regularizer& reg);

/// Strong convexity and smoothness of the regularized objective. Throws
/// NotStronglyConvex when alpha is numerically zero.
ConvexityBounds convexity_bounds(const Problem& p, const Regularizer& reg);

/// Convexity bounds of Q^{-1/2} Sigma Q^{-1/2}, the geometry PSGD sees.
ConvexityBounds preconditioned_bounds(const QuadraticProblem& p, const Matrix& q);

struct PlaneRotation {
  double theta;
};
struct RandomRotation {
  std::uint64_t seed;
};
using Rotation = std::variant<PlaneRotation, RandomRotation>;

/// Sigma = U diag(linspace(eig_min, eig_max, d)) U^T, a = Sigma w_star,
/// offset chosen so the minimum loss is zero. PlaneRotation requires d = 2.
QuadraticProblem make_synthetic_quadratic(Index d, double eig_min, double eig_max,
                                          const Rotation& rotation, const Vector& w_star);

/// The 2-D demo problem: eigenvalues (0.1, 1), rotation pi/3, w_star = (1, 1).
QuadraticProblem make_toy_quadratic();

}  // namespace iteravg
