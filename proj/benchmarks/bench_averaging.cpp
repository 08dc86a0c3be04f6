#include <benchmark/benchmark.h>

#include "iteravg/averaging.hpp"
#include "iteravg/oracles.hpp"

using namespace iteravg;

namespace {

PathRecord toy_path(std::size_t steps) {
  RunOptions o;
  o.steps = steps;
  o.noise = SphereNoise{0.5};
  return sgd_run(make_toy_quadratic(), Regularizer::none(), RateSequence::constant(0.1), o);
}

void BM_WeightsSgdAdaptive(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  std::vector<double> rates(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) rates[k] = k % 2 ? 0.05 : 0.08;
  const auto eta = RateSequence::sequence(rates);
  for (auto _ : state) benchmark::DoNotOptimize(weights_sgd_adaptive(eta, 0.1, steps));
}
BENCHMARK(BM_WeightsSgdAdaptive)->Arg(1000)->Arg(100000);

void BM_WeightsNsgd(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(weights_nsgd(0.1, 0.1, 0.05, steps));
}
BENCHMARK(BM_WeightsNsgd)->Arg(1000)->Arg(100000);

void BM_RunningAverage(benchmark::State& state) {
  const auto dim = static_cast<Index>(state.range(0));
  const Vector w = Vector::LinSpaced(dim, -1.0, 1.0);
  const auto scheme = weights_sgd_adaptive(RateSequence::constant(0.1), 0.1, 1000);
  for (auto _ : state) {
    RunningAverage avg(dim);
    for (std::size_t k = 0; k < scheme.size(); ++k) avg.update(k, w, scheme.increment(k));
    benchmark::DoNotOptimize(avg.finalize());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scheme.size()));
}
BENCHMARK(BM_RunningAverage)->Arg(2)->Arg(7840);

// Re-averaging one stored path under a new lambda, the inner loop of the sweep.
void BM_SweepReaverage(benchmark::State& state) {
  const auto path = toy_path(20000);
  for (auto _ : state) {
    const auto scheme = weights_sgd_adaptive(RateSequence::constant(0.1), 0.3, path.size() - 1);
    RunningAverage avg(path.dim());
    for (std::size_t k = 0; k < path.size(); ++k) avg.update(k, path.at(k), scheme.increment(k));
    benchmark::DoNotOptimize(avg.finalize());
  }
}
BENCHMARK(BM_SweepReaverage);

void BM_IdentityCheck(benchmark::State& state) {
  const auto toy = make_toy_quadratic();
  RunOptions o;
  o.steps = 500;
  const auto plain = sgd_run(toy, Regularizer::none(), RateSequence::constant(0.1), o);
  const auto reg = sgd_run(toy, Regularizer::l2(0.1), RateSequence::constant(coupled_rate(0.1, 0.1)), o);
  const auto scheme = weights_sgd_adaptive(RateSequence::constant(0.1), 0.1, 500);
  for (auto _ : state) benchmark::DoNotOptimize(identity_check(plain, reg, scheme));
}
BENCHMARK(BM_IdentityCheck);

}  // namespace

BENCHMARK_MAIN();
