#include "iteravg/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace iteravg {

namespace {

Eigen::Map<const Matrix> as_matrix(const Vector& w, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(w.data(), rows, cols);
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

std::vector<Vector> averaged_sequence(const std::vector<Vector>& seq, const WeightScheme& scheme) {
  PathRecord tmp;
  tmp.iterates = seq;
  return average_path(tmp, scheme).averages;
}

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

RidgeSolution ridge_solution(const QuadraticProblem& p, const Regularizer& reg) {
  Matrix m = p.sigma;
  switch (reg.kind()) {
    case RegKind::None:
      break;
    case RegKind::L2:
      m.diagonal().array() += reg.lambda();
      break;
    case RegKind::GeneralizedL2:
      if (reg.q().rows() != p.features()) {
        throw PreconditionError("dimension_mismatch", "Q does not match the feature dimension");
      }
      m += reg.lambda() * reg.q();
      break;
    case RegKind::L1:
      throw PreconditionError("l1_not_smooth", "use l1_prox_solution for the l1 penalty");
  }
  Matrix w;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) {
    w = llt.solve(p.a);
  } else {
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw NumericalError("ridge system is singular");
    w = ldlt.solve(p.a);
  }
  const double residual = (m * w - p.a).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff() * w.cwiseAbs().maxCoeff() + p.a.cwiseAbs().maxCoeff());
  if (!w.allFinite() || residual > 1e-8 * scale) {
    throw NumericalError("ridge system is singular (residual " + std::to_string(residual) + ")");
  }
  return {flatten(w), reg.kind(), reg.lambda(), residual};
}

Vector kernel_solution(const KernelProblem& p, double lambda_hat) {
  if (!(lambda_hat >= 0.0)) throw PreconditionError("negative_lambda", "lambda_hat must be >= 0");
  const Vector shifted = p.eigen.values.array() + lambda_hat;
  const double top = std::max(shifted.maxCoeff(), 1.0);
  if (shifted.minCoeff() <= 1e-14 * top) throw NumericalError("K + lambda_hat I is singular");
  const Matrix& u = p.eigen.vectors;
  return u * (u.transpose() * p.y).cwiseQuotient(shifted);
}

Vector project_to_range(const KernelProblem& p, const Vector& v, double rel_tol) {
  const Vector& mu = p.eigen.values;
  const double cut = rel_tol * std::max(mu.maxCoeff(), 0.0);
  const Matrix& u = p.eigen.vectors;
  Vector coords = u.transpose() * v;
  for (Index j = 0; j < mu.size(); ++j)
    if (!(mu(j) > cut)) coords(j) = 0.0;
  return u * coords;
}

Vector regularized_minimizer(const Problem& p, const Regularizer& reg, double grad_tol, std::size_t max_iter) {
  if (const auto* q = std::get_if<QuadraticProblem>(&p)) return ridge_solution(*q, reg).w;
  const double beta = smoothness(p, reg);
  Vector w = Vector::Zero(problem_dim(p));
  Vector g = eval_grad(p, reg, w);
  const double scale = std::max(1.0, g.norm());
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (g.norm() <= grad_tol * scale) return w;
    w -= g / beta;
    g = eval_grad(p, reg, w);
  }
  throw NumericalError("regularized_minimizer hit the iteration cap");
}

PathRecord expectation_path(const QuadraticProblem& p, const Regularizer& reg, const RateSequence& rates,
                            std::size_t steps, const std::optional<Matrix>& preconditioner) {
  const Index d = p.features();
  Matrix m = p.sigma;
  switch (reg.kind()) {
    case RegKind::None: break;
    case RegKind::L2: m.diagonal().array() += reg.lambda(); break;
    case RegKind::GeneralizedL2: m += reg.lambda() * reg.q(); break;
    case RegKind::L1: throw PreconditionError("l1_not_smooth", "expectation_path needs a smooth penalty");
  }
  if (!rates.is_constant() && rates.values().size() < steps) {
    throw PreconditionError("rate_sequence_too_short", "not enough rates for the requested steps");
  }

  // Whitening by the preconditioner's Cholesky factor L turns the update into
  // v <- v - eta (L^{-1} M L^{-T} v - L^{-1} a) with v = L^T w.
  Matrix linv = Matrix::Identity(d, d);
  if (preconditioner) {
    Eigen::LLT<Matrix> llt(*preconditioner);
    if (llt.info() != Eigen::Success || preconditioner->rows() != d) {
      throw PreconditionError("not_positive_definite", "preconditioner must be positive definite and match Sigma");
    }
    linv = llt.matrixL().solve(Matrix::Identity(d, d));
  }
  Matrix lam = linv * m * linv.transpose();
  lam = 0.5 * (lam + lam.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(lam);
  const Vector& mu = es.eigenvalues();
  const Matrix back = linv.transpose() * es.eigenvectors();  // w = back * e
  const Matrix target = es.eigenvectors().transpose() * (linv * p.a);

  PathRecord rec;
  rec.optimizer = "expectation";
  rec.problem_fingerprint = problem_fingerprint(Problem{p});
  rec.noise = "deterministic";
  rec.lambda = reg.lambda();
  rec.rates = rates;
  Matrix e = Matrix::Zero(d, p.outputs());
  rec.iterates.push_back(flatten(back * e));
  for (std::size_t k = 0; k < steps; ++k) {
    const double eta = rates.at(k);
    for (Index c = 0; c < e.cols(); ++c)
      for (Index j = 0; j < d; ++j) e(j, c) -= eta * (mu(j) * e(j, c) - target(j, c));
    rec.iterates.push_back(flatten(back * e));
  }
  return rec;
}

Vector nsgd_expectation_increment(const Vector& sigma_eigs, const Vector& a_eigs, double rate, double alpha,
                                  double lambda, std::size_t k) {
  if (sigma_eigs.size() != a_eigs.size()) throw PreconditionError("dimension_mismatch", "eigs and a differ in size");
  if (!(rate > 0.0) || !(alpha > 0.0) || !(lambda >= 0.0)) {
    throw PreconditionError("nonpositive_rate", "need rate > 0, alpha > 0, lambda >= 0");
  }
  const double al = alpha + lambda;
  const Vector s = sigma_eigs.array() + lambda;
  if (!(rate * s.maxCoeff() < 1.0)) throw PreconditionError("eta_above_inverse_beta", "need rate * beta < 1");
  for (Index j = 0; j < s.size(); ++j) {
    if (!(s(j) > al)) {
      throw PreconditionError("alpha_not_below_spectrum",
                              "alpha must lie strictly below every eigenvalue (sin theta = 0)");
    }
  }
  Vector z = Vector::Zero(s.size());
  if (k == 0) return z;
  const double root = std::sqrt(rate * al);
  for (Index j = 0; j < s.size(); ++j) {
    const double minus_b = (1.0 - root) * (1.0 - rate * s(j)) / (1.0 + root);
    const double cos_t = std::sqrt((1.0 - rate * s(j)) / (1.0 - rate * al));
    const double sin_t = std::sqrt(rate * (s(j) - al) / (1.0 - rate * al));
    const double theta = std::atan2(sin_t, cos_t);
    const double kk = static_cast<double>(k);
    z(j) = rate * a_eigs(j) / sin_t * std::pow(minus_b, 0.5 * (kk - 1.0)) * std::sin(theta * kk);
  }
  return z;
}

PathRecord nsgd_expectation_path(const QuadraticProblem& p, double lambda, double rate, double alpha,
                                 std::size_t steps) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(p.sigma);
  const Vector& mu = es.eigenvalues();
  const Matrix& u = es.eigenvectors();
  const Matrix a_eigs = u.transpose() * p.a;

  PathRecord rec;
  rec.optimizer = "nsgd-expectation";
  rec.problem_fingerprint = problem_fingerprint(Problem{p});
  rec.noise = "deterministic";
  rec.lambda = lambda;
  rec.momentum_alpha = alpha;
  rec.rates = RateSequence::constant(rate);
  Matrix e = Matrix::Zero(p.features(), p.outputs());
  rec.iterates.push_back(flatten(u * e));
  for (std::size_t k = 1; k <= steps; ++k) {
    // E[w_k] = sum_{i<k} z_i
    for (Index c = 0; c < e.cols(); ++c)
      e.col(c) += nsgd_expectation_increment(mu, a_eigs.col(c), rate, alpha, lambda, k - 1);
    rec.iterates.push_back(flatten(u * e));
  }
  return rec;
}

DeviationBound variance_epsilon(const DeviationInputs& in) {
  if (!(in.sigma >= 0.0)) throw PreconditionError("negative_sigma", "sigma must be >= 0");
  if (!(in.delta > 0.0 && in.delta < 1.0)) throw PreconditionError("bad_delta", "delta must lie in (0, 1)");
  if (!(in.gamma > 0.0) || !(in.lambda > 0.0) || !(in.alpha > 0.0)) {
    throw PreconditionError("nonpositive_input", "gamma, lambda and alpha must be positive");
  }
  double eps = 0.0;
  if (in.kind == DeviationKind::Nsgd) {
    if (!(in.eta > 0.0) || !(in.eta * in.alpha < 1.0)) throw PreconditionError("bad_eta", "need 0 < eta alpha < 1");
    if (!(in.lambda_min > in.alpha)) {
      throw PreconditionError("lambda_min_not_above_alpha", "NSGD bound needs lambda_min > alpha");
    }
    const double rg = std::sqrt(in.gamma * (in.alpha + in.lambda));
    const double re = std::sqrt(in.eta * in.alpha);
    const double denom = in.delta * in.eta * (in.lambda_min - in.alpha) * (in.alpha + in.lambda) * (2.0 - re - rg);
    if (!(denom > 0.0) || !(rg > re)) throw PreconditionError("bad_momentum_pair", "need sqrt(gamma(alpha+lambda)) in (sqrt(eta alpha), 2 - sqrt(eta alpha))");
    eps = std::sqrt(in.sigma * in.sigma * in.gamma * (1.0 - in.eta * in.alpha) * (rg - re) / denom);
  } else {
    if (!(in.beta >= in.alpha)) throw PreconditionError("alpha_above_beta", "need alpha <= beta");
    const double lg = in.lambda * in.gamma;
    if (!(lg < 2.0)) throw PreconditionError("bad_rate", "need lambda gamma < 2");
    const double lb = in.lambda + in.beta;
    eps = in.sigma / (in.gamma * (in.lambda + in.alpha) * lb * lb) * std::sqrt(in.lambda / (in.delta * in.gamma * (2.0 - lg)));
    if (in.kind == DeviationKind::Psgd) {
      if (!(in.q_norm > 0.0)) throw PreconditionError("nonpositive_input", "||Q|| must be positive");
      eps *= in.q_norm;
    }
  }
  return {eps, in};
}

LambdaPair lambda_pair_values(double eta, double gamma, const ConvexityBounds& b) {
  const double base = 1.0 / gamma - 1.0 / eta;
  return {base + b.beta - b.alpha, base + b.alpha - b.beta};
}

std::vector<std::string> lambda_pair_violations(double eta, double gamma, const ConvexityBounds& b) {
  std::vector<std::string> out;
  if (!(b.alpha > 0.0) || !(b.beta >= b.alpha)) out.emplace_back("bad_bounds");
  if (!(eta > 1.0 / (2.0 * b.beta - b.alpha))) out.emplace_back("eta_below_window");
  if (!(eta < 1.0 / b.beta)) out.emplace_back("eta_above_inverse_beta");
  if (!(gamma > 0.0)) out.emplace_back("gamma_nonpositive");
  if (!(gamma < eta / (eta * (b.beta - b.alpha) + 1.0))) out.emplace_back("gamma_above_window");
  return out;
}

LambdaPair lambda_pair(double eta, double gamma, const ConvexityBounds& bounds) {
  const auto bad = lambda_pair_violations(eta, gamma, bounds);
  if (!bad.empty()) {
    std::string names;
    for (const auto& n : bad) names += (names.empty() ? "" : ",") + n;
    throw PreconditionError(names, "(eta, gamma) outside the admissible window");
  }
  return lambda_pair_values(eta, gamma, bounds);
}

BoundingSequences bounding_sequences(const Problem& p, const ConvexityBounds& bounds, double eta, double gamma,
                                     const LambdaPair& lambdas, std::size_t steps) {
  const Index dim = problem_dim(p);
  BoundingSequences out;
  out.b = -eval_grad(p, Regularizer::none(), Vector::Zero(dim));
  const Vector w_star = regularized_minimizer(p, Regularizer::none());
  const double cut = 1e-12 * std::max(1.0, w_star.cwiseAbs().maxCoeff());
  out.orientation = Vector::Zero(dim);
  for (Index j = 0; j < dim; ++j) {
    if (std::abs(w_star(j)) <= cut) {
      out.flagged.push_back(j);
    } else {
      out.orientation(j) = w_star(j) > 0.0 ? 1.0 : -1.0;
    }
  }
  const Vector w1 = regularized_minimizer(p, Regularizer::l2(lambdas.lambda1));
  const Vector w2 = regularized_minimizer(p, Regularizer::l2(lambdas.lambda2));
  out.m = 0.5 * (w2 + w1);
  out.d = 0.5 * (w2 - w1);

  auto run = [&](double rate, double curvature) {
    std::vector<Vector> seq;
    seq.reserve(steps + 1);
    Vector x = Vector::Zero(dim);
    seq.push_back(x);
    for (std::size_t k = 0; k < steps; ++k) {
      x -= rate * (curvature * x - out.b);
      seq.push_back(x);
    }
    return seq;
  };
  out.u = run(eta, bounds.alpha);
  out.v = run(eta, bounds.beta);
  out.u_hat = run(gamma, bounds.alpha + lambdas.lambda1);
  out.v_hat = run(gamma, bounds.beta + lambdas.lambda2);
  return out;
}

IdentityReport identity_check(const PathRecord& plain, const PathRecord& regularized, const WeightScheme& scheme) {
  if (plain.size() != regularized.size()) {
    throw PreconditionError("length_mismatch", "paths have " + std::to_string(plain.size()) + " and " +
                                                   std::to_string(regularized.size()) + " iterates");
  }
  if (plain.dim() != regularized.dim()) throw PreconditionError("dimension_mismatch", "paths differ in dimension");
  const AveragedPath avg = average_path(plain, scheme);
  IdentityReport rep;
  rep.residuals.reserve(plain.size());
  for (std::size_t k = 0; k < plain.size(); ++k) {
    Vector expected;
    if (scheme.spectral()) {
      const Matrix& u = scheme.basis();
      const Vector miss = (1.0 - scheme.cumulative_spectrum(k).array()).matrix();
      expected = regularized.at(k) - u * miss.cwiseProduct(u.transpose() * plain.at(k));
    } else {
      expected = regularized.at(k) - (1.0 - scheme.cumulative(k)) * plain.at(k);
    }
    const double r = plain.dim() == 0 ? 0.0 : (avg.weighted_sums[k] - expected).cwiseAbs().maxCoeff();
    rep.residuals.push_back(r);
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.worst_k = k;
    }
  }
  return rep;
}

SandwichReport sandwich_check(const std::vector<Vector>& averaged, const PathRecord& reg_lambda1,
                              const PathRecord& reg_lambda2, const BoundingSequences& bounding,
                              const WeightScheme& scheme) {
  const std::size_t n = averaged.size();
  if (reg_lambda1.size() != n || reg_lambda2.size() != n || bounding.u.size() != n || bounding.v.size() != n) {
    throw PreconditionError("length_mismatch", "sandwich inputs must have equal length");
  }
  if (scheme.spectral()) throw PreconditionError("spectral_scheme", "sandwich_check takes a scalar scheme");
  const auto u_avg = averaged_sequence(bounding.u, scheme);
  const auto v_avg = averaged_sequence(bounding.v, scheme);

  SandwichReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double miss = 1.0 - scheme.cumulative(k);
    const Vector lo1 = reg_lambda1.at(k) + miss * (v_avg[k] - bounding.v[k]);
    const Vector up1 = reg_lambda2.at(k) + miss * (u_avg[k] - bounding.u[k]);
    Vector lo = lo1, up = up1;
    double slack = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < lo.size(); ++j) {
      if (bounding.orientation(j) < 0.0) std::swap(lo(j), up(j));
      if (bounding.orientation(j) == 0.0) continue;
      slack = std::min({slack, averaged[k](j) - lo(j), up(j) - averaged[k](j)});
    }
    rep.lower.push_back(std::move(lo));
    rep.upper.push_back(std::move(up));
    rep.min_slack.push_back(slack);
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_k = k;
    }
  }
  return rep;
}

EnvelopeReport envelope_check(const std::vector<Vector>& averaged, const Vector& m, const Vector& d, double rate,
                              std::size_t fit_end) {
  if (!(rate > 0.0 && rate < 1.0)) throw PreconditionError("bad_rate", "envelope rate must lie in (0, 1)");
  if (averaged.empty()) throw PreconditionError("empty_path", "no averaged iterates");
  EnvelopeReport rep;
  rep.radius = d.norm();
  rep.rate = rate;
  for (const auto& w : averaged) rep.distance.push_back((w - m).norm());
  const std::size_t n = averaged.size();
  const std::size_t end = std::min(fit_end, n - 1);
  for (std::size_t k = 0; k <= end; ++k) {
    const double excess = rep.distance[k] - rep.radius;
    if (excess > 0.0) rep.amplitude = std::max(rep.amplitude, excess / std::pow(rate, static_cast<double>(k)));
  }
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = end; k < n; ++k) {
    const double e = rep.distance[k] - rep.radius - rep.amplitude * std::pow(rate, static_cast<double>(k));
    rep.worst_excess = std::max(rep.worst_excess, e);
  }
  rep.holds = rep.worst_excess <= 1e-12 * std::max(1.0, rep.radius);
  return rep;
}

double l1_optimality_residual(const QuadraticProblem& p, double lambda, const Vector& w) {
  const auto W = as_matrix(w, p.features(), p.outputs());
  const Matrix g = p.sigma * W - p.a;
  double worst = 0.0;
  for (Index c = 0; c < g.cols(); ++c) {
    for (Index j = 0; j < g.rows(); ++j) {
      const double r = W(j, c) != 0.0 ? std::abs(g(j, c) + lambda * (W(j, c) > 0 ? 1.0 : -1.0))
                                      : std::max(0.0, std::abs(g(j, c)) - lambda);
      worst = std::max(worst, r);
    }
  }
  return worst;
}

Vector l1_prox_solution(const QuadraticProblem& p, double lambda, double tol, std::size_t max_iter) {
  if (!(lambda >= 0.0)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  if (!(tol > 0.0)) throw PreconditionError("nonpositive_tol", "tol must be positive");
  const double beta = max_eigenvalue(p.sigma);
  if (!(beta > 0.0)) throw PreconditionError("zero_curvature", "Sigma is zero");
  const double thresh = lambda / beta;
  Matrix w = Matrix::Zero(p.features(), p.outputs());
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector flat = flatten(w);
    if (l1_optimality_residual(p, lambda, flat) <= tol) return flat;
    const Matrix z = w - (p.sigma * w - p.a) / beta;
    w = z.unaryExpr([thresh](double x) { return x > thresh ? x - thresh : (x < -thresh ? x + thresh : 0.0); });
  }
  throw NumericalError("l1_prox_solution did not reach tolerance within the iteration cap");
}

std::vector<Point2> convex_hull(std::vector<Point2> pts, double tol) {
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a == b; }), pts.end());
  if (pts.size() < 3) return pts;
  auto turn_ok = [tol](const Point2& o, const Point2& a, const Point2& b) {
    return cross(o, a, b) > tol * std::max(1.0, (a - o).norm() * (b - o).norm());
  };
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& pt : pts) {
    while (k >= 2 && !turn_ok(hull[k - 2], hull[k - 1], pt)) --k;
    hull[k++] = pt;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && !turn_ok(hull[k - 2], hull[k - 1], pts[i])) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool hull_contains(const std::vector<Point2>& points, const Point2& query, double tol) {
  const auto hull = convex_hull(points, tol);
  if (hull.empty()) return false;
  if (hull.size() == 1) return (hull[0] - query).norm() <= tol * std::max(1.0, hull[0].norm());
  if (hull.size() == 2) {
    const Point2 ab = hull[1] - hull[0];
    const Point2 aq = query - hull[0];
    const double len2 = ab.squaredNorm();
    if (std::abs(cross(hull[0], hull[1], query)) > tol * std::max(1.0, ab.norm() * aq.norm())) return false;
    const double t = ab.dot(aq) / len2;
    return t >= -tol && t <= 1.0 + tol;
  }
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point2& a = hull[i];
    const Point2& b = hull[(i + 1) % hull.size()];
    if (cross(a, b, query) < -tol * std::max(1.0, (b - a).norm() * (query - a).norm())) return false;
  }
  return true;
}

}  // namespace iteravg
