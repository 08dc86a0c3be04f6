#include "iteravg/problems.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace iteravg {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

Eigen::Map<const Matrix> as_matrix(const Vector& w, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(w.data(), rows, cols);
}

Vector flatten(Matrix m) { return Eigen::Map<Vector>(m.data(), m.size()); }

void check_dim(const Vector& w, Index expected) {
  if (w.size() != expected) {
    throw PreconditionError("dimension_mismatch", "parameter has size " + std::to_string(w.size()) +
                                                      ", problem expects " + std::to_string(expected));
  }
}

void require_smooth(const Regularizer& reg) {
  if (reg.kind() == RegKind::L1) {
    throw PreconditionError("l1_not_smooth", "the l1 penalty has no gradient; use l1_prox_solution");
  }
}

// Loss and gradient of the regularizer alone, on the matrix view of w.
void add_regularizer(const Regularizer& reg, const Matrix& w, double& loss, Matrix& grad) {
  switch (reg.kind()) {
    case RegKind::None:
      return;
    case RegKind::L2:
      if (reg.lambda() == 0.0) return;
      loss += 0.5 * reg.lambda() * w.squaredNorm();
      grad += reg.lambda() * w;
      return;
    case RegKind::GeneralizedL2: {
      if (reg.q().rows() != w.rows()) {
        throw PreconditionError("dimension_mismatch", "Q does not match the feature dimension");
      }
      if (reg.lambda() == 0.0) return;
      const Matrix qw = reg.q() * w;
      loss += 0.5 * reg.lambda() * (w.array() * qw.array()).sum();
      grad += reg.lambda() * qw;
      return;
    }
    case RegKind::L1:
      require_smooth(reg);
  }
}

double logsumexp_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

// Mean cross-entropy over rows of x (already selected) and its gradient.
double logistic_data_term(const Matrix& x, const Matrix& y, const Matrix& w, Matrix& grad) {
  const double n = static_cast<double>(x.rows());
  const Matrix z = x * w;
  Matrix resid(z.rows(), z.cols());
  double loss = 0.0;
  if (y.cols() == 1) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double zi = z(i, 0);
      loss += std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi))) - y(i, 0) * zi;
      const double p = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
      resid(i, 0) = p - y(i, 0);
    }
  } else {
    for (Index i = 0; i < z.rows(); ++i) {
      const double lse = logsumexp_row(z.row(i));
      loss += lse - y.row(i).dot(z.row(i));
      resid.row(i) = (z.row(i).array() - lse).exp().matrix() - y.row(i);
    }
  }
  grad = x.transpose() * resid / n;
  return loss / n;
}

template <class Rows>
Matrix select_rows(const Matrix& m, const Rows& idx) {
  // column-major walk: one source column stays in cache while the batch is gathered
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (Index j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i), j) = m(idx[i], j);
  return out;
}

void check_batch(std::span<const Index> batch, Index n) {
  if (batch.empty()) throw PreconditionError("empty_batch", "minibatch has no rows");
  for (Index i : batch) {
    if (i < 0 || i >= n) throw PreconditionError("batch_index_out_of_range", std::to_string(i));
  }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv_matrix(std::uint64_t h, const Matrix& m) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  h = fnv1a(h, dims, sizeof dims);
  return fnv1a(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

}  // namespace

QuadraticProblem QuadraticProblem::from_moments(Matrix sigma, Matrix a, double offset) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) {
    throw PreconditionError("not_square", "Sigma must be a non-empty square matrix");
  }
  if (a.rows() != sigma.rows() || a.cols() == 0) {
    throw PreconditionError("dimension_mismatch", "a must have as many rows as Sigma");
  }
  if (!all_finite(sigma) || !all_finite(a) || !std::isfinite(offset)) {
    throw PreconditionError("non_finite", "Sigma and a must be finite");
  }
  if (!is_symmetric(sigma, 1e-10)) throw PreconditionError("not_symmetric", "Sigma must be symmetric");
  const double lo = min_eigenvalue(sigma);
  const double hi = max_eigenvalue(sigma);
  if (lo < -1e-10 * std::max(1.0, std::abs(hi))) {
    throw PreconditionError("not_psd", "Sigma has eigenvalue " + std::to_string(lo));
  }
  QuadraticProblem p;
  p.sigma = std::move(sigma);
  p.a = std::move(a);
  p.offset = offset;
  return p;
}

QuadraticProblem QuadraticProblem::from_data(Matrix x, Matrix y) {
  if (x.rows() == 0 || x.cols() == 0) throw PreconditionError("empty_data", "X has no rows or columns");
  if (y.rows() != x.rows() || y.cols() == 0) {
    throw PreconditionError("dimension_mismatch", "X and Y must have the same number of rows");
  }
  if (!all_finite(x) || !all_finite(y)) throw PreconditionError("non_finite", "data must be finite");
  const double n = static_cast<double>(x.rows());
  QuadraticProblem p;
  p.sigma = x.transpose() * x / n;
  p.a = x.transpose() * y / n;
  p.offset = y.squaredNorm() / (2.0 * n);
  p.x = std::move(x);
  p.y = std::move(y);
  return p;
}

LogisticProblem LogisticProblem::make(Matrix x, Matrix y, double base_ridge) {
  if (x.rows() == 0 || x.cols() == 0) throw PreconditionError("empty_data", "X has no rows or columns");
  if (y.rows() != x.rows() || y.cols() == 0) {
    throw PreconditionError("dimension_mismatch", "X and Y must have the same number of rows");
  }
  if (!all_finite(x) || !all_finite(y)) throw PreconditionError("non_finite", "data must be finite");
  if (!(base_ridge >= 0.0)) throw PreconditionError("negative_lambda", "base ridge must be >= 0");
  if (y.cols() == 1) {
    if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) {
      throw PreconditionError("bad_labels", "binary labels must lie in [0, 1]");
    }
  } else {
    const Vector sums = y.rowwise().sum();
    if ((y.array() < 0.0).any() || ((sums.array() - 1.0).abs() > 1e-9).any()) {
      throw PreconditionError("bad_labels", "softmax targets must be probability rows");
    }
  }
  return LogisticProblem{std::move(x), std::move(y), base_ridge};
}

KernelProblem KernelProblem::make(Matrix gram, Vector y) {
  if (gram.rows() == 0 || gram.rows() != gram.cols()) {
    throw PreconditionError("not_square", "Gram matrix must be square and non-empty");
  }
  if (y.size() != gram.rows()) throw PreconditionError("dimension_mismatch", "y must match the Gram size");
  if (!all_finite(gram) || !y.allFinite()) throw PreconditionError("non_finite", "Gram and y must be finite");
  if (!is_symmetric(gram, 1e-10)) throw PreconditionError("not_symmetric", "Gram matrix must be symmetric");
  Matrix sym = 0.5 * (gram + gram.transpose());
  SymmetricEigen eig = jacobi_eigen(sym);
  const double top = std::max(eig.values.maxCoeff(), 0.0);
  if (eig.values.minCoeff() < -1e-10 * std::max(1.0, top)) {
    throw PreconditionError("not_psd", "Gram matrix has a negative eigenvalue");
  }
  // round-off negatives to zero so per-eigenvalue formulas stay real
  eig.values = eig.values.cwiseMax(0.0);
  return KernelProblem{std::move(sym), std::move(y), std::move(eig)};
}

Index problem_dim(const Problem& p) {
  return std::visit([](const auto& q) { return q.dim(); }, p);
}

std::string problem_fingerprint(const Problem& p) {
  std::uint64_t h = 14695981039346656037ull;
  const std::uint8_t tag = static_cast<std::uint8_t>(p.index());
  h = fnv1a(h, &tag, 1);
  std::visit(
      [&](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, QuadraticProblem>) {
          h = fnv_matrix(h, q.sigma);
          h = fnv_matrix(h, q.a);
        } else if constexpr (std::is_same_v<T, LogisticProblem>) {
          h = fnv_matrix(h, q.x);
          h = fnv_matrix(h, q.y);
          h = fnv1a(h, &q.base_ridge, sizeof q.base_ridge);
        } else {
          h = fnv_matrix(h, q.gram);
          h = fnv_matrix(h, q.y);
        }
      },
      p);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Regularizer Regularizer::none() { return Regularizer{}; }

Regularizer Regularizer::l2(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  Regularizer r;
  r.kind_ = RegKind::L2;
  r.lambda_ = lambda;
  return r;
}

Regularizer Regularizer::generalized_l2(double lambda, Matrix q) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  if (q.rows() == 0 || q.rows() != q.cols()) throw PreconditionError("not_square", "Q must be square");
  if (!is_symmetric(q, 1e-10)) throw PreconditionError("not_symmetric", "Q must be symmetric");
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(q);
  if (llt->info() != Eigen::Success) throw PreconditionError("not_positive_definite", "Q must be positive definite");
  Regularizer r;
  r.kind_ = RegKind::GeneralizedL2;
  r.lambda_ = lambda;
  r.q_ = std::make_shared<const Matrix>(std::move(q));
  r.q_llt_ = std::move(llt);
  return r;
}

Regularizer Regularizer::l1(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  Regularizer r;
  r.kind_ = RegKind::L1;
  r.lambda_ = lambda;
  return r;
}

const Matrix& Regularizer::q() const {
  if (!q_) throw PreconditionError("no_preconditioner", "regularizer carries no Q");
  return *q_;
}

Matrix Regularizer::solve_q(const Matrix& b) const {
  if (!q_llt_) throw PreconditionError("no_preconditioner", "regularizer carries no Q");
  if (b.rows() != q_->rows()) throw PreconditionError("dimension_mismatch", "Q does not match the feature dimension");
  return q_llt_->solve(b);
}

LossGrad eval_loss_grad(const Problem& p, const Regularizer& reg, const Vector& w) {
  require_smooth(reg);
  check_dim(w, problem_dim(p));
  return std::visit(
      [&](const auto& q) -> LossGrad {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, QuadraticProblem>) {
          const auto W = as_matrix(w, q.features(), q.outputs());
          const Matrix sw = q.sigma * W;
          Matrix g = sw - q.a;
          double loss = 0.5 * (W.array() * sw.array()).sum() - (W.array() * q.a.array()).sum() + q.offset;
          add_regularizer(reg, W, loss, g);
          return {loss, flatten(std::move(g))};
        } else if constexpr (std::is_same_v<T, LogisticProblem>) {
          const Matrix W = as_matrix(w, q.features(), q.outputs());
          Matrix g;
          double loss = logistic_data_term(q.x, q.y, W, g);
          if (q.base_ridge != 0.0) {
            loss += 0.5 * q.base_ridge * W.squaredNorm();
            g += q.base_ridge * W;
          }
          add_regularizer(reg, W, loss, g);
          return {loss, flatten(std::move(g))};
        } else {
          if (reg.kind() == RegKind::GeneralizedL2) {
            throw PreconditionError("unsupported_regularizer", "kernel problems take L2 (RKHS) regularization only");
          }
          const Vector kc = q.gram * w;
          const Vector r = kc - q.y;
          double loss = 0.5 * r.squaredNorm();
          Vector g = q.gram * r;
          if (reg.kind() == RegKind::L2 && reg.lambda() != 0.0) {
            loss += 0.5 * reg.lambda() * w.dot(kc);
            g += reg.lambda() * kc;
          }
          return {loss, std::move(g)};
        }
      },
      p);
}

Vector eval_grad(const Problem& p, const Regularizer& reg, const Vector& w) {
  return eval_loss_grad(p, reg, w).grad;
}

Vector stochastic_grad(const Problem& p, const Regularizer& reg, const Vector& w,
                       std::span<const Index> batch) {
  require_smooth(reg);
  check_dim(w, problem_dim(p));
  return std::visit(
      [&](const auto& q) -> Vector {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, QuadraticProblem>) {
          if (!q.has_data()) {
            throw PreconditionError("no_sample_data", "minibatch gradients need a problem built from data");
          }
          check_batch(batch, q.samples());
          const auto W = as_matrix(w, q.features(), q.outputs());
          const Matrix xb = select_rows(q.x, batch);
          const Matrix yb = select_rows(q.y, batch);
          Matrix g = xb.transpose() * (xb * W - yb) / static_cast<double>(batch.size());
          double unused = 0.0;
          add_regularizer(reg, W, unused, g);
          return flatten(std::move(g));
        } else if constexpr (std::is_same_v<T, LogisticProblem>) {
          check_batch(batch, q.samples());
          const Matrix W = as_matrix(w, q.features(), q.outputs());
          Matrix g;
          logistic_data_term(select_rows(q.x, batch), select_rows(q.y, batch), W, g);
          if (q.base_ridge != 0.0) g += q.base_ridge * W;
          double unused = 0.0;
          add_regularizer(reg, W, unused, g);
          return flatten(std::move(g));
        } else {
          throw PreconditionError("no_sample_data", "kernel problems have no per-sample gradient");
        }
      },
      p);
}

double smoothness(const Problem& p, const Regularizer& reg) {
  require_smooth(reg);
  return std::visit(
      [&](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        double beta = 0.0;
        if constexpr (std::is_same_v<T, QuadraticProblem>) {
          beta = max_eigenvalue(q.sigma);
        } else if constexpr (std::is_same_v<T, LogisticProblem>) {
          const Matrix cov = q.x.transpose() * q.x / static_cast<double>(q.samples());
          // sigmoid'' <= 1/4; the softmax Hessian block has norm <= 1/2
          beta = q.base_ridge + max_eigenvalue(cov) * (q.binary() ? 0.25 : 0.5);
        } else {
          const double mu = q.eigen.values.maxCoeff();
          return mu * mu + (reg.kind() == RegKind::L2 ? reg.lambda() * mu : 0.0);
        }
        if (reg.kind() == RegKind::L2) beta += reg.lambda();
        if (reg.kind() == RegKind::GeneralizedL2) beta += reg.lambda() * max_eigenvalue(reg.q());
        return beta;
      },
      p);
}

ConvexityBounds convexity_bounds(const Problem& p, const Regularizer& reg) {
  const double beta = smoothness(p, reg);
  const double alpha = std::visit(
      [&](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        double a = 0.0;
        if constexpr (std::is_same_v<T, QuadraticProblem>) {
          a = std::max(min_eigenvalue(q.sigma), 0.0);
        } else if constexpr (std::is_same_v<T, LogisticProblem>) {
          a = q.base_ridge;
        } else {
          const double mu = q.eigen.values.minCoeff();
          return mu * mu + (reg.kind() == RegKind::L2 ? reg.lambda() * mu : 0.0);
        }
        if (reg.kind() == RegKind::L2) a += reg.lambda();
        if (reg.kind() == RegKind::GeneralizedL2) a += reg.lambda() * min_eigenvalue(reg.q());
        return a;
      },
      p);
  if (!(alpha > 1e-12 * beta)) {
    throw NotStronglyConvex("strong convexity constant " + std::to_string(alpha) + " is numerically zero");
  }
  return {alpha, beta};
}

ConvexityBounds preconditioned_bounds(const QuadraticProblem& p, const Matrix& q) {
  if (q.rows() != p.features() || q.cols() != p.features()) {
    throw PreconditionError("dimension_mismatch", "Q does not match the feature dimension");
  }
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) throw PreconditionError("not_positive_definite", "Q must be positive definite");
  const Matrix linv = llt.matrixL().solve(Matrix::Identity(q.rows(), q.cols()));
  const Matrix m = linv * p.sigma * linv.transpose();
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double alpha = es.eigenvalues()(0);
  const double beta = es.eigenvalues()(sym.rows() - 1);
  if (!(alpha > 1e-12 * beta)) throw NotStronglyConvex("preconditioned Sigma is singular");
  return {alpha, beta};
}

QuadraticProblem make_synthetic_quadratic(Index d, double eig_min, double eig_max, const Rotation& rotation,
                                          const Vector& w_star) {
  if (d <= 0) throw PreconditionError("bad_dimension", "d must be positive");
  if (!(eig_min >= 0.0) || !(eig_max >= eig_min)) {
    throw PreconditionError("bad_spectrum", "need 0 <= eig_min <= eig_max");
  }
  if (w_star.size() != d) throw PreconditionError("dimension_mismatch", "w_star must have size d");

  Matrix u;
  if (const auto* plane = std::get_if<PlaneRotation>(&rotation)) {
    if (d != 2) throw PreconditionError("bad_dimension", "a plane rotation needs d = 2");
    const double c = std::cos(plane->theta), s = std::sin(plane->theta);
    u.resize(2, 2);
    u << c, -s, s, c;
  } else {
    std::mt19937_64 rng(std::get<RandomRotation>(rotation).seed);
    std::normal_distribution<double> normal;
    Matrix g(d, d);
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    u = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < d; ++j)
      if (r(j, j) < 0) u.col(j) = -u.col(j);
  }

  Vector eigs(d);
  for (Index i = 0; i < d; ++i) {
    eigs(i) = d == 1 ? eig_min : eig_min + (eig_max - eig_min) * static_cast<double>(i) / static_cast<double>(d - 1);
  }
  Matrix sigma = u * eigs.asDiagonal() * u.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  Matrix a = sigma * w_star;
  const double offset = 0.5 * w_star.dot(sigma * w_star);
  QuadraticProblem p = QuadraticProblem::from_moments(std::move(sigma), std::move(a), offset);
  p.w_star = w_star;
  return p;
}

QuadraticProblem make_toy_quadratic() {
  return make_synthetic_quadratic(2, 0.1, 1.0, PlaneRotation{std::numbers::pi / 3.0}, Vector::Ones(2));
}

}  // namespace iteravg
