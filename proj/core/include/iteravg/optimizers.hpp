#pragma once

#include "iteravg/common.hpp"
#include "iteravg/problems.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace iteravg {

/// Learning rates eta_0, eta_1, ... Either one constant or an explicit list.
class RateSequence {
 public:
  static RateSequence constant(double rate);
  static RateSequence sequence(std::vector<double> rates);

  double at(std::size_t k) const;
  bool is_constant() const { return constant_; }
  /// Explicit entries; a constant sequence has exactly one.
  const std::vector<double>& values() const { return values_; }
  double min() const;
  double max() const;
  /// Entry-wise map, keeping constness.
  template <class F>
  RateSequence transform(F f) const {
    RateSequence out = *this;
    for (double& v : out.values_) v = f(v);
    return out;
  }

  bool operator==(const RateSequence&) const = default;

 private:
  bool constant_ = true;
  std::vector<double> values_;
};

/// gamma = eta / (1 + lambda * eta), i.e. 1 - lambda*gamma = gamma/eta.
double coupled_rate(double eta, double lambda);

enum class OptimizerKind { Sgd, Psgd, Nsgd };

struct LRSchedule {
  RateSequence eta;
  RateSequence gamma;
  double lambda = 0.0;
  double eta_floor = 0.0;
};

/// Validates eta_k in (eta_floor, 1/beta) and derives the coupled gamma_k.
/// NSGD additionally needs a constant rate. eta_floor defaults to min eta_k.
LRSchedule make_schedule(const RateSequence& eta, double lambda, const ConvexityBounds& bounds,
                         OptimizerKind kind = OptimizerKind::Sgd, std::optional<double> eta_floor = std::nullopt);

struct Deterministic {};
/// Uniform sampling with replacement of `batch_size` rows per step. A batch of at
/// least n rows means the full gradient.
struct MiniBatchNoise {
  Index batch_size;
};
/// Additive noise drawn uniformly from the sphere of radius sigma.
struct SphereNoise {
  double sigma;
};
using Noise = std::variant<Deterministic, MiniBatchNoise, SphereNoise>;

std::string describe(const Noise& noise);

struct RunOptions {
  std::size_t steps = 0;
  Noise noise = Deterministic{};
  std::uint64_t seed = 0;
};

/// Iterates w_0..w_K of one run plus what produced them.
struct PathRecord {
  std::string optimizer;
  std::string problem_fingerprint;
  std::string noise;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double momentum_alpha = 0.0;  // NSGD only
  RateSequence rates = RateSequence::constant(0.0);
  std::vector<Vector> iterates;

  std::size_t size() const { return iterates.size(); }
  const Vector& at(std::size_t k) const { return iterates.at(k); }
  const Vector& back() const { return iterates.back(); }
  Index dim() const { return iterates.empty() ? 0 : iterates.front().size(); }
};

bool operator==(const PathRecord& a, const PathRecord& b);

/// Gradient used at step k under the given noise model. Minibatch indices and
/// sphere draws depend only on (seed, k), so runs sharing a seed share noise.
Vector noisy_gradient(const Problem& p, const Regularizer& reg, const Vector& w, const Noise& noise,
                      std::uint64_t seed, std::size_t k);

/// w_{k+1} = w_k - eta_k g_k starting from w_0 = 0.
PathRecord sgd_run(const Problem& p, const Regularizer& reg, const RateSequence& rates, const RunOptions& opts);

/// w_{k+1} = w_k - eta_k Q^{-1} g_k. Q comes from `reg`, which must be
/// GeneralizedL2 (lambda = 0 for the plain preconditioned run). Sphere noise
/// is added after preconditioning.
PathRecord psgd_run(const Problem& p, const Regularizer& reg, const RateSequence& rates, const RunOptions& opts);

/// Nesterov momentum, constant rate, tau = (1 - sqrt(rate*s)) / (1 + sqrt(rate*s))
/// with s = alpha + lambda. w_0 = w_1 = 0; opts.steps iterates after w_0.
PathRecord nsgd_run(const Problem& p, const Regularizer& reg, double rate, double alpha, const RunOptions& opts);

/// Full-batch GD on a kernel problem with matrix rate
/// G_k = eta_k (I + shift * eta_k K)^{-1}; shift = 0 gives scalar rates.
PathRecord kernel_gd_run(const KernelProblem& p, double lambda, const RateSequence& eta, std::size_t steps,
                         double shift = 0.0);

}  // namespace iteravg
