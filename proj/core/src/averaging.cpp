#include "iteravg/averaging.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace iteravg {

namespace {

void check_horizon_rates(const RateSequence& eta, std::size_t horizon) {
  if (!eta.is_constant() && eta.values().size() < horizon + 1) {
    throw PreconditionError("rate_sequence_too_short", "scheme horizon exceeds the rate sequence");
  }
  if (!(eta.min() > 0.0)) throw PreconditionError("nonpositive_rate", "learning rates must be positive");
}

// Builds a scheme from per-step survival ratios r_k = 1 - (weight share at k):
// P_k = 1 - prod_{i<=k} r_i and p_k = prod_{i<k} r_i * (1 - r_k).
template <class RatioFn>
WeightScheme from_ratios(SchemeKind kind, std::size_t horizon, Index channels, RatioFn ratio, Matrix basis = {}) {
  const auto rows = static_cast<Index>(horizon + 1);
  Matrix cum(rows, channels), inc(rows, channels);
  for (Index j = 0; j < channels; ++j) {
    double survive = 1.0;
    for (Index k = 0; k < rows; ++k) {
      const double r = ratio(static_cast<std::size_t>(k), j);
      inc(k, j) = survive * (1.0 - r);
      survive *= r;
      cum(k, j) = 1.0 - survive;
    }
  }
  return WeightScheme(kind, std::move(cum), std::move(inc), std::move(basis));
}

}  // namespace

const char* scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::SgdAdaptive: return "sgd";
    case SchemeKind::Nsgd: return "nsgd";
    case SchemeKind::General: return "general";
    case SchemeKind::Kernel: return "kernel";
    case SchemeKind::Geometric: return "geometric";
  }
  return "unknown";
}

WeightScheme::WeightScheme(SchemeKind kind, Matrix cumulative, Matrix increments, Matrix basis)
    : kind_(kind), cum_(std::move(cumulative)), inc_(std::move(increments)), basis_(std::move(basis)) {
  if (cum_.rows() == 0 || cum_.rows() != inc_.rows() || cum_.cols() != inc_.cols()) {
    throw PreconditionError("bad_scheme", "cumulative and increment tables must match and be non-empty");
  }
  if (basis_.size() > 0 && (basis_.rows() != basis_.cols() || basis_.cols() != cum_.cols())) {
    throw PreconditionError("bad_scheme", "basis must be square with one column per channel");
  }
}

double WeightScheme::cumulative(std::size_t k) const {
  if (channels() != 1) throw PreconditionError("spectral_scheme", "use cumulative_spectrum for kernel schemes");
  return cum_(static_cast<Index>(k), 0);
}

double WeightScheme::increment(std::size_t k) const {
  if (channels() != 1) throw PreconditionError("spectral_scheme", "use increment_spectrum for kernel schemes");
  return inc_(static_cast<Index>(k), 0);
}

bool WeightScheme::ill_conditioned() const { return cum_.row(cum_.rows() - 1).minCoeff() < 1e-6; }

WeightScheme weights_sgd_adaptive(const RateSequence& eta, double lambda, std::size_t horizon) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("nonpositive_lambda", "lambda must be > 0");
  check_horizon_rates(eta, horizon);
  return from_ratios(SchemeKind::SgdAdaptive, horizon, 1, [&](std::size_t k, Index) {
    const double e = eta.at(k);
    return coupled_rate(e, lambda) / e;
  });
}

WeightScheme weights_sgd_adaptive(const LRSchedule& schedule, std::size_t horizon) {
  return weights_sgd_adaptive(schedule.eta, schedule.lambda, horizon);
}

WeightScheme weights_nsgd(double eta, double lambda, double alpha, std::size_t horizon) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("nonpositive_lambda", "lambda must be > 0");
  if (!(eta > 0.0) || !(alpha > 0.0)) throw PreconditionError("nonpositive_rate", "eta and alpha must be positive");
  if (!(eta * alpha < 1.0)) throw PreconditionError("momentum_out_of_range", "need eta * alpha < 1");
  const double gamma = coupled_rate(eta, lambda);
  if (!(gamma * (alpha + lambda) < 1.0)) {
    throw PreconditionError("momentum_out_of_range", "need gamma * (alpha + lambda) < 1");
  }
  const double c = (1.0 - std::sqrt(gamma * (alpha + lambda))) / (1.0 - std::sqrt(eta * alpha));
  const double ratio = gamma / eta;
  const auto rows = static_cast<Index>(horizon + 1);
  Matrix cum(rows, 1), inc(rows, 1);
  cum(0, 0) = 0.0;
  inc(0, 0) = 0.0;
  double ck = 1.0;  // C^{k-1}
  for (Index k = 1; k < rows; ++k) {
    cum(k, 0) = 1.0 - ratio * ck;
    inc(k, 0) = k == 1 ? cum(1, 0) : ratio * ck / c * (1.0 - c);
    ck *= c;
    if (ck < std::numeric_limits<double>::min()) ck = 0.0;  // subnormal tails are slow and carry no weight
  }
  return WeightScheme(SchemeKind::Nsgd, std::move(cum), std::move(inc));
}

WeightScheme weights_general(double eta, double gamma, std::size_t horizon) {
  if (!(gamma > 0.0) || !(gamma < eta)) throw PreconditionError("bad_rate_pair", "need 0 < gamma < eta");
  const double r = gamma / eta;
  return from_ratios(SchemeKind::General, horizon, 1, [r](std::size_t, Index) { return r; });
}

WeightScheme weights_kernel(const KernelProblem& p, const RateSequence& eta, double lambda, double lambda_hat,
                            std::size_t horizon) {
  if (!(lambda >= 0.0)) throw PreconditionError("negative_lambda", "lambda must be >= 0");
  if (!(lambda_hat > lambda)) throw PreconditionError("lambda_hat_not_above_lambda", "need lambda_hat > lambda");
  check_horizon_rates(eta, horizon);
  const Vector& mu = p.eigen.values;
  const double shift = lambda_hat - lambda;
  return from_ratios(
      SchemeKind::Kernel, horizon, mu.size(),
      [&](std::size_t k, Index j) { return 1.0 / (1.0 + shift * eta.at(k) * mu(j)); }, p.eigen.vectors);
}

WeightScheme weights_geometric(double p, std::size_t horizon) {
  if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("bad_probability", "need 0 < p <= 1");
  const auto rows = static_cast<Index>(horizon + 1);
  const double q = 1.0 - p;
  // 1 - q^{K+1} computed without cancellation
  const double z = -std::expm1(static_cast<double>(rows) * std::log1p(-p));
  Matrix cum(rows, 1), inc(rows, 1);
  double qk = 1.0;
  for (Index k = 0; k < rows; ++k) {
    inc(k, 0) = p * qk / z;
    cum(k, 0) = k + 1 == rows ? 1.0 : -std::expm1(static_cast<double>(k + 1) * std::log1p(-p)) / z;
    qk *= q;
  }
  return WeightScheme(SchemeKind::Geometric, std::move(cum), std::move(inc));
}

void write_scheme_csv(const WeightScheme& scheme, std::ostream& os) {
  char buf[96];
  if (!scheme.spectral()) {
    os << "k,p_k,P_k\n";
    for (std::size_t k = 0; k < scheme.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k, scheme.increment(k), scheme.cumulative(k));
      os << buf;
    }
    return;
  }
  os << "k,eigen,p_k,P_k\n";
  for (std::size_t k = 0; k < scheme.size(); ++k) {
    const Vector inc = scheme.increment_spectrum(k);
    const Vector cum = scheme.cumulative_spectrum(k);
    for (Index j = 0; j < scheme.channels(); ++j) {
      std::snprintf(buf, sizeof buf, "%zu,%td,%.17g,%.17g\n", k, j, inc(j), cum(j));
      os << buf;
    }
  }
}

RunningAverage::RunningAverage(Index dim) : sum_(Vector::Zero(dim)) {}

void RunningAverage::update(std::size_t k, const Vector& w, double p) {
  if (k != count_) throw PreconditionError("out_of_order_update", "expected index " + std::to_string(count_));
  if (w.size() != sum_.size()) throw PreconditionError("dimension_mismatch", "iterate size changed");
  if (!(p >= 0.0) || !std::isfinite(p)) throw PreconditionError("negative_weight", "weights must be >= 0");
  sum_ += p * w;
  total_ += p;
  ++count_;
}

Vector RunningAverage::finalize() const {
  if (!(total_ > 0.0)) throw PreconditionError("zero_total_weight", "no weight has been accumulated");
  return sum_ / total_;
}

SpectralRunningAverage::SpectralRunningAverage(Matrix basis)
    : basis_(std::move(basis)), sum_(Vector::Zero(basis_.cols())), total_(Vector::Zero(basis_.cols())) {
  if (basis_.rows() != basis_.cols()) throw PreconditionError("not_square", "basis must be square");
}

void SpectralRunningAverage::update(std::size_t k, const Vector& w, const Vector& p) {
  if (k != count_) throw PreconditionError("out_of_order_update", "expected index " + std::to_string(count_));
  if (w.size() != basis_.rows() || p.size() != basis_.cols()) {
    throw PreconditionError("dimension_mismatch", "iterate or weight size does not match the basis");
  }
  if ((p.array() < 0.0).any()) throw PreconditionError("negative_weight", "weights must be >= 0");
  sum_ += p.cwiseProduct(basis_.transpose() * w);
  total_ += p;
  ++count_;
}

Vector SpectralRunningAverage::weighted_sum() const { return basis_ * sum_; }

Vector SpectralRunningAverage::finalize() const {
  if (count_ == 0) throw PreconditionError("zero_total_weight", "no weight has been accumulated");
  Vector coords(sum_.size());
  for (Index j = 0; j < sum_.size(); ++j) coords(j) = total_(j) > 0.0 ? sum_(j) / total_(j) : 0.0;
  return basis_ * coords;
}

AveragedPath average_path(const PathRecord& path, const WeightScheme& scheme) {
  if (scheme.size() < path.size()) {
    throw PreconditionError("scheme_too_short", "scheme has " + std::to_string(scheme.size()) +
                                                    " weights for " + std::to_string(path.size()) + " iterates");
  }
  AveragedPath out;
  out.weighted_sums.reserve(path.size());
  out.averages.reserve(path.size());
  if (path.size() == 0) return out;
  const Index dim = path.dim();

  if (!scheme.spectral()) {
    RunningAverage avg(dim);
    for (std::size_t k = 0; k < path.size(); ++k) {
      avg.update(k, path.at(k), scheme.increment(k));
      out.weighted_sums.push_back(avg.weighted_sum());
      const double pk = scheme.cumulative(k);
      out.averages.push_back(pk > 0.0 ? Vector(avg.weighted_sum() / pk) : path.at(k));
    }
    return out;
  }

  const Matrix& u = scheme.basis();
  if (u.rows() != dim) throw PreconditionError("dimension_mismatch", "scheme basis does not match the path");
  Vector sum = Vector::Zero(dim);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const Vector coords = u.transpose() * path.at(k);
    sum += scheme.increment_spectrum(k).cwiseProduct(coords);
    const Vector pk = scheme.cumulative_spectrum(k);
    Vector avg(dim);
    for (Index j = 0; j < dim; ++j) avg(j) = pk(j) > 0.0 ? sum(j) / pk(j) : coords(j);
    out.weighted_sums.push_back(u * sum);
    out.averages.push_back(u * avg);
  }
  return out;
}

}  // namespace iteravg
