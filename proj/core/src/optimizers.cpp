#include "iteravg/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace iteravg {

namespace {

std::mt19937_64 step_engine(std::uint64_t seed, std::size_t k) {
  const auto kk = static_cast<std::uint64_t>(k);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kk), static_cast<std::uint32_t>(kk >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

Vector sphere_draw(std::mt19937_64& rng, Index dim, double radius) {
  std::normal_distribution<double> normal;
  Vector z(dim);
  double n = 0.0;
  do {
    for (Index i = 0; i < dim; ++i) z(i) = normal(rng);
    n = z.norm();
  } while (n == 0.0);
  return z * (radius / n);
}

struct Guard {
  double limit;

  explicit Guard(const Problem& p) {
    double ref = 0.0;
    if (const auto* q = std::get_if<QuadraticProblem>(&p); q && q->w_star) {
      ref = q->w_star->norm();
    } else {
      ref = eval_grad(p, Regularizer::none(), Vector::Zero(problem_dim(p))).norm();
    }
    limit = 1e8 * (1.0 + ref);
  }

  void check(const Vector& w, std::size_t k, const char* who) const {
    if (!w.allFinite() || w.norm() > limit) {
      std::ostringstream os;
      os << who << " diverged at iterate " << k << " (norm " << w.norm() << ", limit " << limit << ")";
      throw NumericalError(os.str());
    }
  }
};

void check_rate_length(const RateSequence& rates, std::size_t steps) {
  if (!rates.is_constant() && rates.values().size() < steps) {
    throw PreconditionError("rate_sequence_too_short", "need " + std::to_string(steps) + " rates, have " +
                                                           std::to_string(rates.values().size()));
  }
}

PathRecord new_record(const char* name, const Problem& p, const Regularizer& reg, const RateSequence& rates,
                      const RunOptions& opts) {
  PathRecord rec;
  rec.optimizer = name;
  rec.problem_fingerprint = problem_fingerprint(p);
  rec.noise = describe(opts.noise);
  rec.seed = opts.seed;
  rec.lambda = reg.lambda();
  rec.rates = rates;
  rec.iterates.reserve(opts.steps + 1);
  return rec;
}

}  // namespace

RateSequence RateSequence::constant(double rate) {
  if (!std::isfinite(rate)) throw PreconditionError("non_finite_rate", "rate must be finite");
  RateSequence r;
  r.constant_ = true;
  r.values_ = {rate};
  return r;
}

RateSequence RateSequence::sequence(std::vector<double> rates) {
  if (rates.empty()) throw PreconditionError("empty_rate_sequence", "rate sequence is empty");
  for (double v : rates)
    if (!std::isfinite(v)) throw PreconditionError("non_finite_rate", "rate must be finite");
  RateSequence r;
  r.constant_ = false;
  r.values_ = std::move(rates);
  return r;
}

double RateSequence::at(std::size_t k) const {
  if (constant_) return values_.front();
  if (k >= values_.size()) {
    throw PreconditionError("rate_sequence_too_short", "no rate for step " + std::to_string(k));
  }
  return values_[k];
}

double RateSequence::min() const { return *std::min_element(values_.begin(), values_.end()); }
double RateSequence::max() const { return *std::max_element(values_.begin(), values_.end()); }

double coupled_rate(double eta, double lambda) { return eta / (1.0 + lambda * eta); }

LRSchedule make_schedule(const RateSequence& eta, double lambda, const ConvexityBounds& bounds, OptimizerKind kind,
                         std::optional<double> eta_floor) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  if (!(bounds.beta > 0.0)) throw PreconditionError("bad_bounds", "beta must be positive");
  if (kind == OptimizerKind::Nsgd && !eta.is_constant()) {
    throw PreconditionError("nsgd_constant_rate", "NSGD averaging needs a constant learning rate");
  }
  const double floor = eta_floor.value_or(eta.min());
  if (!(floor > 0.0)) throw PreconditionError("nonpositive_rate", "learning rates must be positive");
  for (double v : eta.values()) {
    if (v < floor) throw PreconditionError("eta_below_floor", "rate below the declared floor");
    if (!(v * bounds.beta < 1.0)) {
      throw PreconditionError("eta_above_inverse_beta", "rate " + std::to_string(v) + " is not below 1/beta = " +
                                                            std::to_string(1.0 / bounds.beta));
    }
  }
  LRSchedule s;
  s.eta = eta;
  s.gamma = eta.transform([lambda](double e) { return coupled_rate(e, lambda); });
  s.lambda = lambda;
  s.eta_floor = floor;
  return s;
}

std::string describe(const Noise& noise) {
  std::ostringstream os;
  os.precision(17);
  if (std::holds_alternative<Deterministic>(noise)) {
    os << "deterministic";
  } else if (const auto* mb = std::get_if<MiniBatchNoise>(&noise)) {
    os << "minibatch:" << mb->batch_size;
  } else {
    os << "sphere:" << std::get<SphereNoise>(noise).sigma;
  }
  return os.str();
}

bool operator==(const PathRecord& a, const PathRecord& b) {
  if (a.optimizer != b.optimizer || a.problem_fingerprint != b.problem_fingerprint || a.noise != b.noise ||
      a.seed != b.seed || a.lambda != b.lambda || a.momentum_alpha != b.momentum_alpha || !(a.rates == b.rates) ||
      a.iterates.size() != b.iterates.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.iterates.size(); ++k) {
    if (a.iterates[k].size() != b.iterates[k].size()) return false;
    if (!(a.iterates[k].array() == b.iterates[k].array()).all()) return false;
  }
  return true;
}

Vector noisy_gradient(const Problem& p, const Regularizer& reg, const Vector& w, const Noise& noise,
                      std::uint64_t seed, std::size_t k) {
  if (std::holds_alternative<Deterministic>(noise)) return eval_grad(p, reg, w);
  auto rng = step_engine(seed, k);
  if (const auto* mb = std::get_if<MiniBatchNoise>(&noise)) {
    const Index n = std::visit(
        [](const auto& q) -> Index {
          using T = std::decay_t<decltype(q)>;
          if constexpr (std::is_same_v<T, KernelProblem>) {
            return 0;
          } else {
            return q.samples();
          }
        },
        p);
    if (mb->batch_size <= 0) throw PreconditionError("empty_batch", "batch size must be positive");
    if (n == 0) throw PreconditionError("no_sample_data", "minibatch noise needs per-sample data");
    // a batch covering the whole data set is the full gradient, not an n-draw resample
    if (mb->batch_size >= n) return eval_grad(p, reg, w);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> batch(static_cast<std::size_t>(mb->batch_size));
    for (auto& i : batch) i = pick(rng);
    return stochastic_grad(p, reg, w, batch);
  }
  const double sigma = std::get<SphereNoise>(noise).sigma;
  if (!(sigma >= 0.0)) throw PreconditionError("negative_sigma", "noise radius must be >= 0");
  return eval_grad(p, reg, w) + sphere_draw(rng, w.size(), sigma);
}

PathRecord sgd_run(const Problem& p, const Regularizer& reg, const RateSequence& rates, const RunOptions& opts) {
  check_rate_length(rates, opts.steps);
  const Guard guard(p);
  PathRecord rec = new_record("sgd", p, reg, rates, opts);
  Vector w = Vector::Zero(problem_dim(p));
  rec.iterates.push_back(w);
  for (std::size_t k = 0; k < opts.steps; ++k) {
    w -= rates.at(k) * noisy_gradient(p, reg, w, opts.noise, opts.seed, k);
    guard.check(w, k + 1, "sgd");
    rec.iterates.push_back(w);
  }
  return rec;
}

PathRecord psgd_run(const Problem& p, const Regularizer& reg, const RateSequence& rates, const RunOptions& opts) {
  if (reg.kind() != RegKind::GeneralizedL2) {
    throw PreconditionError("psgd_needs_q", "psgd_run takes its preconditioner from a generalized-l2 regularizer");
  }
  if (std::holds_alternative<KernelProblem>(p)) {
    throw PreconditionError("unsupported_problem", "psgd_run does not apply to kernel problems");
  }
  check_rate_length(rates, opts.steps);
  const Guard guard(p);
  const Index d = reg.q().rows();
  const Index dim = problem_dim(p);
  if (dim % d != 0) throw PreconditionError("dimension_mismatch", "Q does not match the feature dimension");
  const Index c = dim / d;

  // Noise is injected after preconditioning, so draw the clean gradient here.
  const Noise grad_noise = std::holds_alternative<SphereNoise>(opts.noise) ? Noise{Deterministic{}} : opts.noise;
  PathRecord rec = new_record("psgd", p, reg, rates, opts);
  Vector w = Vector::Zero(dim);
  rec.iterates.push_back(w);
  for (std::size_t k = 0; k < opts.steps; ++k) {
    Vector g = noisy_gradient(p, reg, w, grad_noise, opts.seed, k);
    Matrix dir = reg.solve_q(Eigen::Map<const Matrix>(g.data(), d, c));
    Vector step = Eigen::Map<Vector>(dir.data(), dim);
    if (const auto* sn = std::get_if<SphereNoise>(&opts.noise)) {
      if (!(sn->sigma >= 0.0)) throw PreconditionError("negative_sigma", "noise radius must be >= 0");
      auto rng = step_engine(opts.seed, k);
      step += sphere_draw(rng, dim, sn->sigma);
    }
    w -= rates.at(k) * step;
    guard.check(w, k + 1, "psgd");
    rec.iterates.push_back(w);
  }
  return rec;
}

PathRecord nsgd_run(const Problem& p, const Regularizer& reg, double rate, double alpha, const RunOptions& opts) {
  if (reg.kind() != RegKind::None && reg.kind() != RegKind::L2) {
    throw PreconditionError("unsupported_regularizer", "nsgd_run takes no regularizer or plain l2");
  }
  if (!(rate > 0.0)) throw PreconditionError("nonpositive_rate", "rate must be positive");
  if (!(alpha > 0.0)) throw PreconditionError("nonpositive_alpha", "alpha must be positive");
  const double s = std::sqrt(rate * (alpha + reg.lambda()));
  if (!(s < 1.0)) throw PreconditionError("momentum_out_of_range", "need rate * (alpha + lambda) < 1");
  const double tau = (1.0 - s) / (1.0 + s);

  const Guard guard(p);
  PathRecord rec = new_record("nsgd", p, reg, RateSequence::constant(rate), opts);
  rec.momentum_alpha = alpha;
  const Index dim = problem_dim(p);
  Vector prev = Vector::Zero(dim);
  Vector w = Vector::Zero(dim);
  rec.iterates.push_back(prev);
  if (opts.steps == 0) return rec;
  rec.iterates.push_back(w);
  for (std::size_t k = 1; k < opts.steps; ++k) {
    const Vector v = w + tau * (w - prev);
    Vector next = v - rate * noisy_gradient(p, reg, v, opts.noise, opts.seed, k);
    guard.check(next, k + 1, "nsgd");
    prev = std::move(w);
    w = std::move(next);
    rec.iterates.push_back(w);
  }
  return rec;
}

PathRecord kernel_gd_run(const KernelProblem& p, double lambda, const RateSequence& eta, std::size_t steps,
                         double shift) {
  if (!(lambda >= 0.0)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  if (!(shift >= 0.0)) throw PreconditionError("negative_shift", "rate shift must be >= 0");
  check_rate_length(eta, steps);
  const Problem prob = p;
  const Guard guard(prob);
  const Regularizer reg = Regularizer::l2(lambda);
  RunOptions opts;
  opts.steps = steps;
  PathRecord rec = new_record("kernel-gd", prob, reg, eta, opts);
  const Matrix& u = p.eigen.vectors;
  const Vector& mu = p.eigen.values;
  Vector c = Vector::Zero(p.dim());
  rec.iterates.push_back(c);
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector g = eval_grad(prob, reg, c);
    const double e = eta.at(k);
    if (shift == 0.0) {
      c -= e * g;
    } else {
      const Vector scale = (e / (1.0 + shift * e * mu.array())).matrix();
      c -= u * scale.cwiseProduct(u.transpose() * g);
    }
    guard.check(c, k + 1, "kernel-gd");
    rec.iterates.push_back(c);
  }
  return rec;
}

}  // namespace iteravg
