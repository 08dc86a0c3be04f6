#pragma once

#include "iteravg/averaging.hpp"
#include "iteravg/common.hpp"
#include "iteravg/optimizers.hpp"
#include "iteravg/problems.hpp"

#include <optional>
#include <string>
#include <vector>

namespace iteravg {

struct RidgeSolution {
  Vector w;
  RegKind kind;
  double lambda;
  double residual;  // ||M w - a||_inf for the solved system M
};

/// Minimizer of a quadratic plus None / L2 / GeneralizedL2 penalty, by
/// Cholesky (LDLT fallback for semidefinite systems).
RidgeSolution ridge_solution(const QuadraticProblem& p, const Regularizer& reg);

/// (K + lambda_hat I)^{-1} y via the cached eigendecomposition.
Vector kernel_solution(const KernelProblem& p, double lambda_hat);

/// Orthogonal projection onto span of eigenvectors with mu > rel_tol * mu_max.
Vector project_to_range(const KernelProblem& p, const Vector& v, double rel_tol = 1e-10);

/// Minimizer of any smooth problem plus regularizer: closed form for
/// quadratics, gradient descent with step 1/beta otherwise.
Vector regularized_minimizer(const Problem& p, const Regularizer& reg, double grad_tol = 1e-13,
                             std::size_t max_iter = 2'000'000);

/// E[w_k] under zero-mean gradient noise, evaluated in the eigenbasis of
/// Sigma (or of Q^{-1/2} Sigma Q^{-1/2} when a preconditioner is given).
PathRecord expectation_path(const QuadraticProblem& p, const Regularizer& reg, const RateSequence& rates,
                            std::size_t steps, const std::optional<Matrix>& preconditioner = std::nullopt);

/// Closed-form Nesterov increments z_k = E[w_{k+1}] - E[w_k] per eigendirection
/// for constant `rate`. With lambda > 0 the shifted spectrum Sigma + lambda and
/// strong convexity alpha + lambda are used (pass the regularized rate).
Vector nsgd_expectation_increment(const Vector& sigma_eigs, const Vector& a_eigs, double rate, double alpha,
                                  double lambda, std::size_t k);

/// E[w_k] for NSGD assembled from the closed-form increments.
PathRecord nsgd_expectation_path(const QuadraticProblem& p, double lambda, double rate, double alpha,
                                 std::size_t steps);

enum class DeviationKind { Sgd, Psgd, Nsgd };

struct DeviationInputs {
  DeviationKind kind = DeviationKind::Sgd;
  double sigma = 0.0;
  double delta = 0.1;
  double gamma = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double eta = 0.0;         // NSGD
  double lambda_min = 0.0;  // NSGD: smallest eigenvalue of Sigma
  double q_norm = 1.0;      // PSGD: ||Q||_2
};

struct DeviationBound {
  double epsilon;
  DeviationInputs inputs;
};

/// Chebyshev radius for ||P_k w~_k - P_k E[w~_k]|| holding with probability 1 - delta.
DeviationBound variance_epsilon(const DeviationInputs& in);

struct LambdaPair {
  double lambda1;
  double lambda2;
};

/// lambda1 = 1/gamma - 1/eta + beta - alpha, lambda2 = 1/gamma - 1/eta + alpha - beta.
LambdaPair lambda_pair_values(double eta, double gamma, const ConvexityBounds& bounds);
/// Names of violated window conditions; empty when (eta, gamma) is admissible.
std::vector<std::string> lambda_pair_violations(double eta, double gamma, const ConvexityBounds& bounds);
LambdaPair lambda_pair(double eta, double gamma, const ConvexityBounds& bounds);

struct BoundingSequences {
  std::vector<Vector> u;      // u_{k+1} = u_k - eta (alpha u_k - b)
  std::vector<Vector> v;      // v_{k+1} = v_k - eta (beta v_k - b)
  std::vector<Vector> u_hat;  // rate gamma, curvature alpha + lambda1
  std::vector<Vector> v_hat;  // rate gamma, curvature beta + lambda2
  Vector b;                   // -grad L(0)
  Vector orientation;         // sign of w_* per coordinate, 0 where flagged
  std::vector<Index> flagged;
  Vector m;  // midpoint of the regularized minimizers at lambda2 and lambda1
  Vector d;  // half their difference
};

BoundingSequences bounding_sequences(const Problem& p, const ConvexityBounds& bounds, double eta, double gamma,
                                     const LambdaPair& lambdas, std::size_t steps);

struct IdentityReport {
  std::vector<double> residuals;
  double max_residual = 0.0;
  std::size_t worst_k = 0;
};

/// Residual of P_k w~_k - (w^_k - (1 - P_k) w_k) at every k.
IdentityReport identity_check(const PathRecord& plain, const PathRecord& regularized, const WeightScheme& scheme);

struct SandwichReport {
  std::vector<Vector> lower;
  std::vector<Vector> upper;
  std::vector<double> min_slack;  // per k, over unflagged coordinates
  double worst_slack = 0.0;
  std::size_t worst_k = 0;
};

/// Entry-wise bracket of the averaged path between the regularized paths
/// corrected by the averaged bounding sequences. Coordinates with negative
/// orientation use the mirrored bracket.
SandwichReport sandwich_check(const std::vector<Vector>& averaged, const PathRecord& reg_lambda1,
                              const PathRecord& reg_lambda2, const BoundingSequences& bounding,
                              const WeightScheme& scheme);

struct EnvelopeReport {
  std::vector<double> distance;  // ||w~_k - m||
  double radius = 0.0;           // ||d||
  double rate = 0.0;
  double amplitude = 0.0;
  double worst_excess = 0.0;  // max over verification window of distance - radius - A C^k
  bool holds = false;
};

/// Fits A = max_{k < fit_end} (distance_k - radius)_+ / C^k, then checks
/// distance_k <= radius + A C^k for k >= fit_end.
EnvelopeReport envelope_check(const std::vector<Vector>& averaged, const Vector& m, const Vector& d, double rate,
                              std::size_t fit_end);

/// Proximal gradient (step 1/beta, soft thresholding) for the l1-penalized quadratic.
Vector l1_prox_solution(const QuadraticProblem& p, double lambda, double tol = 1e-12,
                        std::size_t max_iter = 1'000'000);

/// Max violation of 0 in grad L(w) + lambda d||w||_1.
double l1_optimality_residual(const QuadraticProblem& p, double lambda, const Vector& w);

using Point2 = Eigen::Vector2d;

/// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
std::vector<Point2> convex_hull(std::vector<Point2> points, double tol = 1e-12);

/// Inside or on the boundary of the hull of `points`.
bool hull_contains(const std::vector<Point2>& points, const Point2& query, double tol = 1e-12);

}  // namespace iteravg
