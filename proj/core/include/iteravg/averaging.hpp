#pragma once

#include "iteravg/common.hpp"
#include "iteravg/optimizers.hpp"
#include "iteravg/problems.hpp"

#include <iosfwd>
#include <vector>

namespace iteravg {

enum class SchemeKind { SgdAdaptive, Nsgd, General, Kernel, Geometric };

const char* scheme_name(SchemeKind kind);

/// Weights p_0..p_K with cumulative sums P_0..P_K. Scalar schemes have one
/// channel; the kernel scheme has one channel per Gram eigenvalue and applies
/// its weights in that eigenbasis.
class WeightScheme {
 public:
  WeightScheme(SchemeKind kind, Matrix cumulative, Matrix increments, Matrix basis = Matrix());

  SchemeKind kind() const { return kind_; }
  std::size_t size() const { return static_cast<std::size_t>(cum_.rows()); }
  std::size_t horizon() const { return size() - 1; }
  Index channels() const { return cum_.cols(); }
  bool spectral() const { return basis_.size() > 0; }
  const Matrix& basis() const { return basis_; }

  double cumulative(std::size_t k) const;
  double increment(std::size_t k) const;
  Vector cumulative_spectrum(std::size_t k) const { return cum_.row(static_cast<Index>(k)).transpose(); }
  Vector increment_spectrum(std::size_t k) const { return inc_.row(static_cast<Index>(k)).transpose(); }

  /// True when P_K < 1e-6: the average is still dominated by missing weight.
  bool ill_conditioned() const;

 private:
  SchemeKind kind_;
  Matrix cum_;
  Matrix inc_;
  Matrix basis_;
};

/// P_k = 1 - prod_{i<=k} gamma_i/eta_i with gamma_i = eta_i / (1 + lambda eta_i).
WeightScheme weights_sgd_adaptive(const RateSequence& eta, double lambda, std::size_t horizon);
WeightScheme weights_sgd_adaptive(const LRSchedule& schedule, std::size_t horizon);

/// P_0 = 0, P_k = 1 - (gamma/eta) C^{k-1} with
/// C = (1 - sqrt(gamma (alpha + lambda))) / (1 - sqrt(eta alpha)).
WeightScheme weights_nsgd(double eta, double lambda, double alpha, std::size_t horizon);

/// P_k = 1 - (gamma/eta)^{k+1} for an arbitrary pair 0 < gamma < eta.
WeightScheme weights_general(double eta, double gamma, std::size_t horizon);

/// Per Gram eigenvalue mu: P_k = 1 - prod_{i<=k} 1 / (1 + (lambda_hat - lambda) eta_i mu).
WeightScheme weights_kernel(const KernelProblem& p, const RateSequence& eta, double lambda, double lambda_hat,
                            std::size_t horizon);

/// p_k proportional to p (1-p)^k, truncated at the horizon and renormalized.
WeightScheme weights_geometric(double p, std::size_t horizon);

/// Columns k,p_k,P_k (plus an eigen index column for spectral schemes).
void write_scheme_csv(const WeightScheme& scheme, std::ostream& os);

/// Streaming weighted average with scalar weights. Updates must arrive in
/// index order.
class RunningAverage {
 public:
  explicit RunningAverage(Index dim);

  void update(std::size_t k, const Vector& w, double p);
  std::size_t count() const { return count_; }
  double total_weight() const { return total_; }
  /// P_k * w~_k, the raw weighted sum.
  const Vector& weighted_sum() const { return sum_; }
  Vector finalize() const;

 private:
  Vector sum_;
  double total_ = 0.0;
  std::size_t count_ = 0;
};

/// Streaming average with diagonal weights in a fixed orthonormal basis.
class SpectralRunningAverage {
 public:
  explicit SpectralRunningAverage(Matrix basis);

  void update(std::size_t k, const Vector& w, const Vector& p);
  std::size_t count() const { return count_; }
  const Vector& total_weight() const { return total_; }
  Vector weighted_sum() const;
  /// Directions that have received no weight are reported as zero.
  Vector finalize() const;

 private:
  Matrix basis_;
  Vector sum_;  // in basis coordinates
  Vector total_;
  std::size_t count_ = 0;
};

struct AveragedPath {
  std::vector<Vector> weighted_sums;  // P_k w~_k
  std::vector<Vector> averages;       // w~_k; the iterate itself where P_k = 0
};

/// Averages every prefix of the path under the scheme.
AveragedPath average_path(const PathRecord& path, const WeightScheme& scheme);

}  // namespace iteravg
