#include "iteravg/experiments.hpp"

#include "iteravg/averaging.hpp"
#include "iteravg/linalg.hpp"
#include "iteravg/oracles.hpp"
#include "iteravg/path_io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace iteravg {

using nlohmann::ordered_json;
using Params = std::vector<std::pair<std::string, double>>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs f(0..n-1) on a small thread pool. Results must be written by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next++;
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> cumulative_of(const WeightScheme& s, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = s.cumulative(k);
  return out;
}

Report make_report(const std::string& id, const ExperimentConfig& c, std::vector<ReportRow> rows) {
  Report r;
  r.experiment = id;
  r.config_json = config_to_json(c);
  r.rows = std::move(rows);
  return r;
}

std::string path_csv(const PathRecord& plain, const PathRecord& reg, const std::vector<Vector>& avg) {
  std::ostringstream os;
  const Index d = plain.dim();
  os << "k";
  for (const char* tag : {"w", "w_reg", "w_avg"})
    for (Index j = 0; j < d; ++j) os << ',' << tag << '_' << j;
  os << '\n';
  for (std::size_t k = 0; k < plain.size(); ++k) {
    os << k;
    for (const Vector* v : {&plain.at(k), &reg.at(k), &avg[k]})
      for (Index j = 0; j < d; ++j) os << ',' << num((*v)(j));
    os << '\n';
  }
  return os.str();
}

double single_lambda(const ExperimentConfig& c, double fallback) {
  if (c.lambdas.empty()) return fallback;
  if (c.lambdas.size() != 1) {
    throw PreconditionError("single_lambda_expected", c.subcommand + " takes exactly one lambda");
  }
  return c.lambdas.front();
}

void require_positive_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("nonpositive_lambda", "lambda must be > 0");
}

std::size_t steps_or(const ExperimentConfig& c, std::size_t fallback) {
  const std::size_t k = c.steps.value_or(fallback);
  if (k == 0) throw PreconditionError("zero_steps", "steps must be positive");
  return k;
}

RunOptions deterministic_opts(std::size_t steps) {
  RunOptions o;
  o.steps = steps;
  return o;
}

// Slowest per-step factor of a spectral window over [from, to].
std::size_t slope_start(std::size_t steps) { return std::min<std::size_t>(50, steps / 10); }

// One plain/regularized pair averaged under its scheme.
struct PairRun {
  std::string name;
  PathRecord plain;
  PathRecord reg;
  WeightScheme scheme;
  AveragedPath avg;
};

PairRun pair_run(std::string name, PathRecord plain, PathRecord reg, WeightScheme scheme) {
  AveragedPath avg = average_path(plain, scheme);
  return PairRun{std::move(name), std::move(plain), std::move(reg), std::move(scheme), std::move(avg)};
}

// ----------------------------------------------------------------------------
// toy runs shared by demo2d / verify-identity / variance-mc

struct ToySetup {
  QuadraticProblem toy;
  Problem prob;
  double eta;
  double lambda;
  double gamma;
  double alpha;
  std::size_t steps;
  Matrix q;
};

ToySetup toy_setup(const ExperimentConfig& c) {
  ToySetup s{make_toy_quadratic(), Problem{}, 0, 0, 0, 0, 0, Matrix()};
  s.prob = s.toy;
  s.eta = c.eta.value_or(0.1);
  s.lambda = single_lambda(c, 0.1);
  s.alpha = c.alpha.value_or(0.05);
  s.steps = steps_or(c, 500);
  s.q = s.toy.sigma;
  require_positive_lambda(s.lambda);
  const auto bounds = convexity_bounds(s.prob, Regularizer::none());
  make_schedule(RateSequence::constant(s.eta), s.lambda, bounds);
  make_schedule(RateSequence::constant(s.eta), s.lambda, preconditioned_bounds(s.toy, s.q), OptimizerKind::Psgd);
  make_schedule(RateSequence::constant(s.eta), s.lambda, bounds, OptimizerKind::Nsgd);
  s.gamma = coupled_rate(s.eta, s.lambda);
  weights_nsgd(s.eta, s.lambda, s.alpha, s.steps);  // validates the momentum pair
  return s;
}

std::vector<PairRun> toy_runs(const ToySetup& s) {
  const auto eta = RateSequence::constant(s.eta);
  const auto gamma = RateSequence::constant(s.gamma);
  const auto opts = deterministic_opts(s.steps);
  std::vector<PairRun> runs;
  runs.push_back(pair_run("gd", sgd_run(s.prob, Regularizer::none(), eta, opts),
                          sgd_run(s.prob, Regularizer::l2(s.lambda), gamma, opts),
                          weights_sgd_adaptive(eta, s.lambda, s.steps)));
  runs.push_back(pair_run("pgd", psgd_run(s.prob, Regularizer::generalized_l2(0.0, s.q), eta, opts),
                          psgd_run(s.prob, Regularizer::generalized_l2(s.lambda, s.q), gamma, opts),
                          weights_sgd_adaptive(eta, s.lambda, s.steps)));
  runs.push_back(pair_run("ngd", nsgd_run(s.prob, Regularizer::none(), s.eta, s.alpha, opts),
                          nsgd_run(s.prob, Regularizer::l2(s.lambda), s.gamma, s.alpha, opts),
                          weights_nsgd(s.eta, s.lambda, s.alpha, s.steps)));
  return runs;
}

double nsgd_ratio(double eta, double lambda, double alpha) {
  const double gamma = coupled_rate(eta, lambda);
  return (1.0 - std::sqrt(gamma * (alpha + lambda))) / (1.0 - std::sqrt(eta * alpha));
}

ExperimentResult run_demo2d(const ExperimentConfig& c) {
  const ToySetup s = toy_setup(c);
  const double ident_tol = c.tolerance("identity", 1e-10);
  const double final_tol = c.tolerance("final_error", 1e-6);
  const double limit_tol = c.tolerance("limit", 1e-6);
  const double margin = c.tolerance("slope_margin", 1e-3);

  ExperimentResult res;
  const auto t0 = Clock::now();
  const auto runs = toy_runs(s);
  res.timings.emplace_back("optimize_and_average_seconds", seconds_since(t0));

  for (const auto& r : runs) {
    const Params params = {{"eta", s.eta}, {"lambda", s.lambda}, {"steps", static_cast<double>(s.steps)}};
    const IdentityReport id = identity_check(r.plain, r.reg, r.scheme);
    res.checks.push_back(check_le("identity_" + r.name, id.max_residual, ident_tol, params));

    std::vector<double> err;
    for (std::size_t k = 0; k < r.plain.size(); ++k) err.push_back((r.avg.averages[k] - r.reg.at(k)).norm());
    const double rate = r.name == "ngd" ? std::log(nsgd_ratio(s.eta, s.lambda, s.alpha))
                                        : std::log(1.0 - s.lambda * s.gamma);
    const double slope = log_slope(err, slope_start(s.steps), s.steps);
    res.checks.push_back(check_le("slope_" + r.name, slope, rate + margin, params));

    const Vector& last_avg = r.avg.averages.back();
    res.checks.push_back(
        check_le("final_error_" + r.name, (last_avg - r.reg.back()).cwiseAbs().maxCoeff(), final_tol, params));

    const Regularizer target_reg = r.name == "pgd" ? Regularizer::generalized_l2(s.lambda, s.q)
                                                   : Regularizer::l2(s.lambda);
    const Vector target = ridge_solution(s.toy, target_reg).w;
    res.checks.push_back(check_le("limit_" + r.name, (last_avg - target).cwiseAbs().maxCoeff(), limit_tol, params));

    res.reports.push_back(make_report("demo2d-" + r.name, c,
                                      error_rows(r.plain.iterates, r.avg.averages, r.reg.iterates,
                                                 cumulative_of(r.scheme, r.plain.size()))));
    res.files.emplace_back("demo2d-" + r.name + "-path.csv", path_csv(r.plain, r.reg, r.avg.averages));
  }
  return res;
}

// ----------------------------------------------------------------------------
// kernel problems

KernelProblem random_kernel(std::uint64_t seed, std::size_t n, std::size_t features) {
  if (n == 0 || n > 50) throw PreconditionError("bad_kernel_size", "kernel demo needs 1 <= n <= 50");
  if (features < n) throw PreconditionError("gram_not_spd", "need at least n features for an SPD Gram matrix");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix x(static_cast<Index>(n), static_cast<Index>(features));
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
  Vector y(static_cast<Index>(n));
  for (Index i = 0; i < y.size(); ++i) y(i) = normal(rng);
  Matrix k = x * x.transpose() / static_cast<double>(features);
  return KernelProblem::make(std::move(k), std::move(y));
}

struct KernelSetup {
  KernelProblem kp;
  double lambda = 0.0;
  double eta = 0.0;
  std::vector<double> lambda_hats;
  std::size_t steps = 0;
};

KernelSetup kernel_setup(const ExperimentConfig& c, std::vector<double> default_hats, std::size_t default_steps) {
  KernelSetup s{random_kernel(c.seed, c.kernel_n, c.kernel_features), 0.0, 0.0, {}, 0};
  s.lambda_hats = c.lambdas.empty() ? std::move(default_hats) : c.lambdas;
  s.steps = steps_or(c, default_steps);
  const double mu_max = s.kp.eigen.values.maxCoeff();
  s.eta = c.eta.value_or(0.9 / (mu_max * (mu_max + s.lambda)));
  const auto bounds = ConvexityBounds{0.0, smoothness(Problem{s.kp}, Regularizer::l2(s.lambda))};
  make_schedule(RateSequence::constant(s.eta), s.lambda, bounds);
  for (double lh : s.lambda_hats) weights_kernel(s.kp, RateSequence::constant(s.eta), s.lambda, lh, 1);
  return s;
}

void kernel_checks(const KernelSetup& s, const ExperimentConfig& c, ExperimentResult& res, bool with_limits) {
  const auto eta = RateSequence::constant(s.eta);
  const PathRecord plain = kernel_gd_run(s.kp, s.lambda, eta, s.steps);
  // minimum over eigendirections in the range of K
  const double cut = 1e-10 * s.kp.eigen.values.maxCoeff();
  auto range_min = [&](const Vector& per_eigen) {
    double m = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < per_eigen.size(); ++j)
      if (s.kp.eigen.values(j) > cut) m = std::min(m, per_eigen(j));
    return m;
  };
  const double mu_min = range_min(s.kp.eigen.values);

  for (double lh : s.lambda_hats) {
    const std::string tag = "lhat=" + short_num(lh);
    const Params params = {{"lambda_hat", lh}, {"eta", s.eta}, {"steps", static_cast<double>(s.steps)}};
    const PathRecord reg = kernel_gd_run(s.kp, lh, eta, s.steps, lh - s.lambda);
    const WeightScheme scheme = weights_kernel(s.kp, eta, s.lambda, lh, s.steps);
    const AveragedPath avg = average_path(plain, scheme);
    res.checks.push_back(
        check_le("kernel_identity_" + tag, identity_check(plain, reg, scheme).max_residual,
                 c.tolerance("kernel_identity", 1e-9), params));
    if (!with_limits) continue;

    const Vector target = kernel_solution(s.kp, lh);
    const double limit = project_to_range(s.kp, avg.averages.back() - target).cwiseAbs().maxCoeff();
    res.checks.push_back(check_le("kernel_limit_" + tag, limit, c.tolerance("kernel_limit", 1e-6), params));

    // decay (1 + (lambda_hat - lambda) eta mu_min)^{-k}: per eigendirection the gap is
    // (1 - P_k)/P_k (w^_k - w_k), and both runs move monotonically from 0 toward their limits,
    // so ||w~_k - w^_k|| <= rho^{k+1} / min_j P_k^j * (||w^_*|| + ||w_*||) on the range of K.
    const double rho = 1.0 / (1.0 + (lh - s.lambda) * s.eta * mu_min);
    const double scale = target.norm() + project_to_range(s.kp, kernel_solution(s.kp, s.lambda)).norm();
    const double floor = 1e-12 * (1.0 + scale);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < plain.size(); ++k) {
      const double p_min = range_min(scheme.cumulative_spectrum(k));
      if (!(p_min > 0.0)) continue;
      const double r = project_to_range(s.kp, avg.averages[k] - reg.at(k)).norm();
      worst = std::max(worst, r - std::pow(rho, static_cast<double>(k + 1)) / p_min * scale - floor);
    }
    Params dp = params;
    dp.emplace_back("rate", rho);
    dp.emplace_back("scale", scale);
    res.checks.push_back(check_le("kernel_decay_" + tag, worst, 0.0, dp));

    std::vector<double> cum(plain.size());
    for (std::size_t k = 0; k < plain.size(); ++k) cum[k] = scheme.cumulative_spectrum(k).minCoeff();
    res.reports.push_back(
        make_report("kernel-demo-" + tag, c, error_rows(plain.iterates, avg.averages, reg.iterates, cum)));
  }
}

ExperimentResult run_kernel_demo(const ExperimentConfig& c) {
  const KernelSetup s = kernel_setup(c, {0.5, 1.0, 2.0}, 2000);
  ExperimentResult res;
  const auto t0 = Clock::now();
  kernel_checks(s, c, res, true);
  res.timings.emplace_back("total_seconds", seconds_since(t0));
  return res;
}

// ----------------------------------------------------------------------------

ExperimentResult run_verify_identity(const ExperimentConfig& c) {
  const ToySetup s = toy_setup(c);
  const double tol = c.tolerance("identity", 1e-10);
  ExperimentResult res;
  const auto t0 = Clock::now();
  const Params params = {{"eta", s.eta}, {"lambda", s.lambda}, {"steps", static_cast<double>(s.steps)}};
  for (const auto& r : toy_runs(s)) {
    res.checks.push_back(check_le("identity_" + r.name, identity_check(r.plain, r.reg, r.scheme).max_residual, tol,
                                  params));
  }

  // alternating rates inside (0.5/beta, 0.9/beta)
  auto alternating = [&](double beta) {
    std::vector<double> v(s.steps + 1);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = (k % 2 == 0 ? 0.55 : 0.85) / beta;
    return RateSequence::sequence(std::move(v));
  };
  const auto opts = deterministic_opts(s.steps);
  {
    const auto bounds = convexity_bounds(s.prob, Regularizer::none());
    const auto sched = make_schedule(alternating(bounds.beta), s.lambda, bounds);
    const auto plain = sgd_run(s.prob, Regularizer::none(), sched.eta, opts);
    const auto reg = sgd_run(s.prob, Regularizer::l2(s.lambda), sched.gamma, opts);
    res.checks.push_back(check_le("identity_adaptive_gd",
                                  identity_check(plain, reg, weights_sgd_adaptive(sched, s.steps)).max_residual, tol,
                                  params));
  }
  {
    const auto bounds = preconditioned_bounds(s.toy, s.q);
    const auto sched = make_schedule(alternating(bounds.beta), s.lambda, bounds, OptimizerKind::Psgd);
    const auto plain = psgd_run(s.prob, Regularizer::generalized_l2(0.0, s.q), sched.eta, opts);
    const auto reg = psgd_run(s.prob, Regularizer::generalized_l2(s.lambda, s.q), sched.gamma, opts);
    res.checks.push_back(check_le("identity_adaptive_pgd",
                                  identity_check(plain, reg, weights_sgd_adaptive(sched, s.steps)).max_residual, tol,
                                  params));
  }
  ExperimentConfig kc = c;
  kc.lambdas = {};
  kc.eta.reset();
  const KernelSetup ks = kernel_setup(kc, {1.0}, s.steps);
  kernel_checks(ks, c, res, false);
  res.timings.emplace_back("total_seconds", seconds_since(t0));
  return res;
}

// ----------------------------------------------------------------------------

ExperimentResult run_variance_mc(const ExperimentConfig& c) {
  const ToySetup s = toy_setup(c);
  if (!(c.sigma > 0.0)) throw PreconditionError("nonpositive_sigma", "noise radius must be positive");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw PreconditionError("bad_delta", "delta must lie in (0, 1)");
  if (c.seeds == 0) throw PreconditionError("zero_seeds", "need at least one seed");

  const double lmin = min_eigenvalue(s.toy.sigma);
  const double lmax = max_eigenvalue(s.toy.sigma);
  const ConvexityBounds pb = preconditioned_bounds(s.toy, s.q);
  const double eps_sgd =
      variance_epsilon({DeviationKind::Sgd, c.sigma, c.delta, s.gamma, s.lambda, lmin, lmax}).epsilon;
  DeviationInputs pin{DeviationKind::Psgd, c.sigma, c.delta, s.gamma, s.lambda, pb.alpha, pb.beta};
  pin.q_norm = spectral_norm(s.q);
  const double eps_psgd = variance_epsilon(pin).epsilon;
  DeviationInputs nin{DeviationKind::Nsgd, c.sigma, c.delta, s.gamma, s.lambda, s.alpha, lmax};
  nin.eta = s.eta;
  nin.lambda_min = lmin;
  const double eps_nsgd = variance_epsilon(nin).epsilon;

  const auto eta = RateSequence::constant(s.eta);
  const auto sgd_scheme = weights_sgd_adaptive(eta, s.lambda, s.steps);
  const auto nsgd_scheme = weights_nsgd(s.eta, s.lambda, s.alpha, s.steps);
  const Regularizer precond = Regularizer::generalized_l2(0.0, s.q);

  const Vector exp_sgd =
      average_path(expectation_path(s.toy, Regularizer::none(), eta, s.steps), sgd_scheme).weighted_sums.back();
  const Vector exp_psgd =
      average_path(expectation_path(s.toy, Regularizer::none(), eta, s.steps, s.q), sgd_scheme).weighted_sums.back();
  const Vector exp_nsgd =
      average_path(nsgd_expectation_path(s.toy, 0.0, s.eta, s.alpha, s.steps), nsgd_scheme).weighted_sums.back();

  ExperimentResult res;
  const auto t0 = Clock::now();
  std::vector<std::array<double, 3>> dev(c.seeds);
  parallel_for(c.seeds, [&](std::size_t i) {
    RunOptions o;
    o.steps = s.steps;
    o.noise = SphereNoise{c.sigma};
    o.seed = c.seed + i;
    dev[i][0] = (average_path(sgd_run(s.prob, Regularizer::none(), eta, o), sgd_scheme).weighted_sums.back() - exp_sgd)
                    .norm();
    dev[i][1] = (average_path(psgd_run(s.prob, precond, eta, o), sgd_scheme).weighted_sums.back() - exp_psgd).norm();
    dev[i][2] =
        (average_path(nsgd_run(s.prob, Regularizer::none(), s.eta, s.alpha, o), nsgd_scheme).weighted_sums.back() -
         exp_nsgd)
            .norm();
  });
  res.timings.emplace_back("monte_carlo_seconds", seconds_since(t0));

  const std::array<double, 3> eps = {eps_sgd, eps_psgd, eps_nsgd};
  const std::array<const char*, 3> names = {"sgd", "psgd", "nsgd"};
  std::ostringstream csv;
  csv << "seed,dev_sgd,dev_psgd,dev_nsgd\n";
  for (std::size_t i = 0; i < c.seeds; ++i)
    csv << c.seed + i << ',' << num(dev[i][0]) << ',' << num(dev[i][1]) << ',' << num(dev[i][2]) << '\n';
  res.files.emplace_back("variance-mc.csv", csv.str());

  for (std::size_t v = 0; v < 3; ++v) {
    std::size_t over = 0;
    double worst = 0.0;
    for (const auto& d : dev) {
      if (d[v] > eps[v]) ++over;
      worst = std::max(worst, d[v]);
    }
    const double freq = static_cast<double>(over) / static_cast<double>(c.seeds);
    res.checks.push_back(check_le(std::string("deviation_") + names[v], freq,
                                  c.delta + c.tolerance("deviation_margin", 0.05),
                                  {{"epsilon", eps[v]},
                                   {"max_deviation", worst},
                                   {"sigma", c.sigma},
                                   {"delta", c.delta},
                                   {"seeds", static_cast<double>(c.seeds)}}));
  }
  return res;
}

// ----------------------------------------------------------------------------

LogisticProblem random_logistic(std::uint64_t seed, std::size_t n, std::size_t d, double scale, double ridge) {
  if (n == 0 || d == 0) throw PreconditionError("bad_dimension", "need samples and features");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(static_cast<Index>(n), static_cast<Index>(d));
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) x(i, j) = scale * normal(rng);
  Vector w(static_cast<Index>(d));
  for (Index j = 0; j < w.size(); ++j) w(j) = normal(rng);
  Matrix y(static_cast<Index>(n), 1);
  for (Index i = 0; i < y.rows(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(w)));
    y(i, 0) = unif(rng) < p ? 1.0 : 0.0;
  }
  return LogisticProblem::make(std::move(x), std::move(y), ridge);
}

ExperimentResult run_sandwich(const ExperimentConfig& c) {
  const double ridge = single_lambda(c, 1.0);
  const LogisticProblem lp = random_logistic(c.seed, c.sandwich_samples, c.sandwich_dim, c.feature_scale, ridge);
  const Problem prob = lp;
  const std::size_t steps = steps_or(c, 500);
  const ConvexityBounds b = convexity_bounds(prob, Regularizer::none());
  const double eta = c.eta.value_or(0.5 * (1.0 / (2.0 * b.beta - b.alpha) + 1.0 / b.beta));
  const double gamma = c.gamma.value_or(0.5 * eta / (eta * (b.beta - b.alpha) + 1.0));
  const LambdaPair lp12 = lambda_pair(eta, gamma, b);

  ExperimentResult res;
  const auto t0 = Clock::now();
  const auto opts = deterministic_opts(steps);
  const PathRecord plain = sgd_run(prob, Regularizer::none(), RateSequence::constant(eta), opts);
  const PathRecord reg1 = sgd_run(prob, Regularizer::l2(lp12.lambda1), RateSequence::constant(gamma), opts);
  const PathRecord reg2 = sgd_run(prob, Regularizer::l2(lp12.lambda2), RateSequence::constant(gamma), opts);
  const WeightScheme scheme = weights_general(eta, gamma, steps);
  const AveragedPath avg = average_path(plain, scheme);
  const BoundingSequences bs = bounding_sequences(prob, b, eta, gamma, lp12, steps);
  const SandwichReport sw = sandwich_check(avg.averages, reg1, reg2, bs, scheme);
  const double rate = std::max({1.0 - gamma * (b.alpha + lp12.lambda1), 1.0 - gamma * (b.alpha + lp12.lambda2),
                                gamma / eta});
  const std::size_t fit_end = std::min<std::size_t>(50, steps);
  const EnvelopeReport env = envelope_check(avg.averages, bs.m, bs.d, rate, fit_end);
  res.timings.emplace_back("total_seconds", seconds_since(t0));

  const Params params = {{"eta", eta},         {"gamma", gamma},    {"lambda1", lp12.lambda1},
                         {"lambda2", lp12.lambda2}, {"alpha", b.alpha}, {"beta", b.beta},
                         {"flagged_coordinates", static_cast<double>(bs.flagged.size())}};
  Params sp = params;
  sp.emplace_back("worst_k", static_cast<double>(sw.worst_k));
  res.checks.push_back(check_le("sandwich_slack", -sw.worst_slack, c.tolerance("sandwich_slack", 1e-8), sp));
  Params ep = params;
  ep.emplace_back("rate", rate);
  ep.emplace_back("amplitude", env.amplitude);
  ep.emplace_back("radius", env.radius);
  res.checks.push_back(check_le("sandwich_envelope", env.worst_excess, 1e-12 * std::max(1.0, env.radius), ep));

  std::ostringstream csv;
  csv << "k,min_slack,distance_to_m,radius,envelope\n";
  for (std::size_t k = 0; k < plain.size(); ++k) {
    csv << k << ',' << num(sw.min_slack[k]) << ',' << num(env.distance[k]) << ',' << num(env.radius) << ','
        << num(env.radius + env.amplitude * std::pow(rate, static_cast<double>(k))) << '\n';
  }
  res.files.emplace_back("sandwich.csv", csv.str());
  return res;
}

// ----------------------------------------------------------------------------

ExperimentResult run_l1_hull(const ExperimentConfig& c) {
  const QuadraticProblem toy = make_toy_quadratic();
  const Problem prob = toy;
  const double eta = c.eta.value_or(0.1);
  const std::size_t steps = steps_or(c, 500);
  const std::vector<double> lambdas = c.lambdas.empty() ? std::vector<double>{0.01, 0.03, 0.1, 0.3, 1, 3} : c.lambdas;
  make_schedule(RateSequence::constant(eta), 0.0, convexity_bounds(prob, Regularizer::none()));
  for (double l : lambdas) require_positive_lambda(l);

  ExperimentResult res;
  const auto t0 = Clock::now();
  const PathRecord path = sgd_run(prob, Regularizer::none(), RateSequence::constant(eta), deterministic_opts(steps));
  std::vector<Point2> pts;
  for (const auto& w : path.iterates) pts.emplace_back(w(0), w(1));

  std::size_t l1_outside = 0, ridge_outside = 0;
  std::ostringstream csv;
  csv << "lambda,l1_0,l1_1,l1_inside,ridge_0,ridge_1,ridge_inside\n";
  for (double l : lambdas) {
    const Vector w1 = l1_prox_solution(toy, l, c.tolerance("l1_tol", 1e-12));
    const Vector w2 = ridge_solution(toy, Regularizer::l2(l)).w;
    const bool in1 = hull_contains(pts, Point2(w1(0), w1(1)));
    const bool in2 = hull_contains(pts, Point2(w2(0), w2(1)));
    l1_outside += in1 ? 0 : 1;
    ridge_outside += in2 ? 0 : 1;
    csv << num(l) << ',' << num(w1(0)) << ',' << num(w1(1)) << ',' << in1 << ',' << num(w2(0)) << ','
        << num(w2(1)) << ',' << in2 << '\n';
  }
  res.timings.emplace_back("total_seconds", seconds_since(t0));
  res.files.emplace_back("l1-hull.csv", csv.str());
  std::ostringstream pcsv;
  pcsv << "k,w_0,w_1\n";
  for (std::size_t k = 0; k < path.size(); ++k) pcsv << k << ',' << num(path.at(k)(0)) << ',' << num(path.at(k)(1)) << '\n';
  res.files.emplace_back("l1-hull-path.csv", pcsv.str());

  const Params params = {{"lambdas", static_cast<double>(lambdas.size())}, {"steps", static_cast<double>(steps)}};
  Check outside = check_le("l1_outside_hull", -static_cast<double>(l1_outside), -1.0, params);
  res.checks.push_back(outside);
  res.checks.push_back(check_le("ridge_inside_hull", static_cast<double>(ridge_outside), 0.0, params));
  return res;
}

// ----------------------------------------------------------------------------

ExperimentResult run_sweep(const ExperimentConfig& c) {
  const QuadraticProblem toy = make_toy_quadratic();
  const Problem prob = toy;
  const std::vector<double> lambdas = c.lambdas.empty() ? std::vector<double>{0.01, 0.1, 1, 10} : c.lambdas;
  for (double l : lambdas) require_positive_lambda(l);
  const double tol = c.tolerance("sweep", 1e-6);

  ExperimentResult res;
  PathRecord path;
  auto t0 = Clock::now();
  if (!c.path_file.empty()) {
    path = load_path(c.path_file);
    if (path.problem_fingerprint != problem_fingerprint(prob)) {
      throw PreconditionError("fingerprint_mismatch", "stored path was not produced on the toy problem");
    }
    if (path.optimizer != "sgd" || path.noise != "deterministic" || path.lambda != 0.0) {
      throw PreconditionError("unsupported_path", "sweep re-averages deterministic unregularized GD paths");
    }
    res.timings.emplace_back("load_seconds", seconds_since(t0));
  } else {
    const double eta = c.eta.value_or(0.1);
    make_schedule(RateSequence::constant(eta), 0.0, convexity_bounds(prob, Regularizer::none()));
    path = sgd_run(prob, Regularizer::none(), RateSequence::constant(eta), deterministic_opts(steps_or(c, 20000)));
    res.timings.emplace_back("optimize_seconds", seconds_since(t0));
    std::ostringstream os;
    write_path(path, os);
    res.files.emplace_back("sweep-path.jsonl", os.str());
  }
  const std::size_t horizon = path.size() - 1;

  std::vector<Vector> averages(lambdas.size());
  std::vector<double> seconds(lambdas.size()), final_p(lambdas.size());
  parallel_for(lambdas.size(), [&](std::size_t i) {
    const auto ti = Clock::now();
    const WeightScheme scheme = weights_sgd_adaptive(path.rates, lambdas[i], horizon);
    RunningAverage avg(path.dim());
    for (std::size_t k = 0; k < path.size(); ++k) avg.update(k, path.at(k), scheme.increment(k));
    averages[i] = avg.weighted_sum() / scheme.cumulative(horizon);
    final_p[i] = scheme.cumulative(horizon);
    seconds[i] = seconds_since(ti);
  });

  std::ostringstream csv;
  csv << "lambda,err_inf_vs_ridge,P_K\n";
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const Vector target = ridge_solution(toy, Regularizer::l2(lambdas[i])).w;
    const double err = (averages[i] - target).cwiseAbs().maxCoeff();
    csv << num(lambdas[i]) << ',' << num(err) << ',' << num(final_p[i]) << '\n';
    res.checks.push_back(check_le("sweep_lambda=" + short_num(lambdas[i]), err, tol,
                                  {{"lambda", lambdas[i]}, {"steps", static_cast<double>(horizon)}}));
    res.timings.emplace_back("average_seconds_lambda=" + short_num(lambdas[i]), seconds[i]);
  }
  res.files.emplace_back("sweep.csv", csv.str());
  return res;
}

// ----------------------------------------------------------------------------
// MNIST

Dataset mnist_data(const ExperimentConfig& c) {
  if (c.images.empty() || c.labels.empty()) {
    throw PreconditionError("missing_data_path", "MNIST image and label paths are required");
  }
  if (c.limit == 0) throw PreconditionError("zero_limit", "row limit must be positive");
  return load_idx(c.images, c.labels, c.limit);
}

double preconditioned_beta(const Matrix& sigma_like, const Matrix& q) {
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) throw PreconditionError("not_positive_definite", "Q must be positive definite");
  const Matrix linv = llt.matrixL().solve(Matrix::Identity(q.rows(), q.cols()));
  const Matrix m = linv * sigma_like * linv.transpose();
  return max_eigenvalue(0.5 * (m + m.transpose()));
}

struct MnistRun {
  std::string name;
  PathRecord plain;
  PathRecord reg;
  WeightScheme scheme;
};

ExperimentResult run_mnist(const ExperimentConfig& c, bool logistic) {
  const std::string id = logistic ? "mnist-logistic" : "mnist-linear";
  const Dataset ds = mnist_data(c);
  const double eta = c.eta.value_or(0.01);
  const double lambda = single_lambda(c, 4.0);
  const double alpha = c.alpha.value_or(1.0);
  const std::size_t steps = steps_or(c, 500);
  const Index batch = c.batch.value_or(500);
  require_positive_lambda(lambda);
  if (batch <= 0) throw PreconditionError("empty_batch", "batch size must be positive");
  if (!(c.damping > 0.0)) throw PreconditionError("nonpositive_damping", "preconditioner damping must be > 0");

  Problem prob;
  Matrix cov;
  if (logistic) {
    LogisticProblem lp = LogisticProblem::make(ds.x, ds.y, 1.0);
    cov = lp.x.transpose() * lp.x / static_cast<double>(lp.samples());
    prob = std::move(lp);
  } else {
    QuadraticProblem qp = QuadraticProblem::from_data(ds.x, ds.y);
    cov = qp.sigma;
    prob = std::move(qp);
  }
  Matrix q = cov;
  q.diagonal().array() += c.damping;
  const double gamma = coupled_rate(eta, lambda);

  // validate every schedule before running anything
  const double beta = smoothness(prob, Regularizer::none());
  make_schedule(RateSequence::constant(eta), lambda, {0.0, beta});
  make_schedule(RateSequence::constant(eta), lambda, {0.0, preconditioned_beta(logistic ? q : cov, q)},
                OptimizerKind::Psgd);
  make_schedule(RateSequence::constant(eta), lambda, {0.0, beta}, OptimizerKind::Nsgd);
  const WeightScheme sgd_scheme = weights_sgd_adaptive(RateSequence::constant(eta), lambda, steps);
  const WeightScheme nsgd_scheme = weights_nsgd(eta, lambda, alpha, steps);

  std::vector<std::pair<std::string, Noise>> modes = {{"deterministic", Deterministic{}}};
  if (!c.deterministic) modes.emplace_back("stochastic", MiniBatchNoise{batch});

  ExperimentResult res;
  for (const auto& [mode, noise] : modes) {
    RunOptions o;
    o.steps = steps;
    o.noise = noise;
    o.seed = c.seed;
    const auto t0 = Clock::now();
    std::vector<MnistRun> runs;
    const auto er = RateSequence::constant(eta), gr = RateSequence::constant(gamma);
    runs.push_back({"gd", sgd_run(prob, Regularizer::none(), er, o), sgd_run(prob, Regularizer::l2(lambda), gr, o),
                    sgd_scheme});
    runs.push_back({"pgd", psgd_run(prob, Regularizer::generalized_l2(0.0, q), er, o),
                    psgd_run(prob, Regularizer::generalized_l2(lambda, q), gr, o), sgd_scheme});
    runs.push_back({"ngd", nsgd_run(prob, Regularizer::none(), eta, alpha, o),
                    nsgd_run(prob, Regularizer::l2(lambda), gamma, alpha, o), nsgd_scheme});
    res.timings.emplace_back(mode + "_seconds", seconds_since(t0));

    for (const auto& r : runs) {
      const std::string tag = r.name + "_" + mode;
      const AveragedPath avg = average_path(r.plain, r.scheme);
      auto rows = error_rows(r.plain.iterates, avg.averages, r.reg.iterates, cumulative_of(r.scheme, r.plain.size()));
      const Params params = {{"eta", eta}, {"lambda", lambda}, {"steps", static_cast<double>(steps)},
                             {"rows", static_cast<double>(ds.x.rows())}};
      if (!logistic && mode == "deterministic") {
        res.checks.push_back(check_le("identity_" + tag, identity_check(r.plain, r.reg, r.scheme).max_residual,
                                      c.tolerance("identity", 1e-9), params));
      }
      if (!logistic && mode == "deterministic" && r.name == "gd") {
        double rise = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 10; k + 1 < rows.size(); ++k)
          rise = std::max(rise, rows[k + 1].err_avg_vs_reg_l1 - rows[k].err_avg_vs_reg_l1);
        res.checks.push_back(check_le("monotone_after_10_" + tag, rise, 0.0, params));
        const double rel = rows.back().err_avg_vs_reg_l1 / r.reg.back().lpNorm<1>();
        res.checks.push_back(check_le("final_relative_" + tag, rel, c.tolerance("mnist_final_relative", 1e-4), params));
      }
      if (mode == "stochastic" || logistic) {
        const double ratio = rows.back().err_avg_vs_reg_l1 / rows.back().err_plain_vs_reg_l1;
        res.checks.push_back(check_le("avg_below_plain_" + tag, ratio, 1.0, params));
      }
      res.reports.push_back(make_report(id + "-" + r.name + "-" + mode, c, std::move(rows)));
    }
  }
  return res;
}

// ----------------------------------------------------------------------------

ExperimentResult run_avg_geometric(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  if (c.checkpoint_dir.empty()) throw PreconditionError("missing_checkpoint_dir", "--checkpoints is required");
  if (!fs::is_directory(c.checkpoint_dir)) {
    throw PreconditionError("missing_checkpoint_dir", c.checkpoint_dir.string() + " is not a directory");
  }
  const std::vector<double> ps = c.probabilities.empty() ? std::vector<double>{0.9999, 0.999, 0.99, 0.9}
                                                         : c.probabilities;
  for (double p : ps) {
    if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("bad_probability", "need 0 < p <= 1");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(c.checkpoint_dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".jsonl" || ext == ".json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (c.reverse) std::reverse(files.begin(), files.end());
  if (files.empty()) throw PreconditionError("no_checkpoints", "no .json or .jsonl files found");

  std::vector<Vector> checkpoints;
  for (const auto& f : files) {
    if (f.extension() == ".jsonl") {
      checkpoints.push_back(load_path(f).back());
    } else {
      std::ifstream is(f);
      const auto j = nlohmann::json::parse(is, nullptr, false);
      if (!j.is_array()) throw FormatError(f.string() + " is not a JSON array");
      const auto v = j.get<std::vector<double>>();
      checkpoints.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    }
    if (checkpoints.back().size() != checkpoints.front().size()) {
      throw FormatError(f.string() + " has a different dimension from the first checkpoint");
    }
  }

  ExperimentResult res;
  const auto t0 = Clock::now();
  const std::size_t horizon = checkpoints.size() - 1;
  ordered_json out;
  out["checkpoints"] = ordered_json::array();
  for (const auto& f : files) out["checkpoints"].push_back(f.filename().string());
  out["averages"] = ordered_json::array();
  for (double p : ps) {
    const WeightScheme s = weights_geometric(p, horizon);
    RunningAverage avg(checkpoints.front().size());
    for (std::size_t k = 0; k <= horizon; ++k) avg.update(k, checkpoints[k], s.increment(k));
    const Vector w = avg.finalize();
    out["averages"].push_back({{"p", p}, {"average", std::vector<double>(w.data(), w.data() + w.size())}});
    res.checks.push_back(check_le("geometric_normalized_p=" + short_num(p), std::abs(avg.total_weight() - 1.0),
                                  1e-12, {{"p", p}, {"checkpoints", static_cast<double>(checkpoints.size())}}));
  }
  res.timings.emplace_back("total_seconds", seconds_since(t0));
  res.files.emplace_back("geometric.json", out.dump(1) + "\n");
  return res;
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read_val(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

double ExperimentConfig::tolerance(const std::string& name, double fallback) const {
  const auto it = tolerances.find(name);
  return it == tolerances.end() ? fallback : it->second;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"demo2d",  "verify-identity", "mnist-linear", "mnist-logistic",
                                                 "kernel-demo", "variance-mc", "sandwich",     "l1-hull",
                                                 "sweep",   "avg-geometric"};
  return names;
}

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError("config_not_json", e.what());
  }
  if (!j.is_object()) throw PreconditionError("config_not_object", "config must be a JSON object");
  static const std::set<std::string> known = {
      "schema_version", "subcommand", "seed",     "steps",        "lambda",          "eta",
      "gamma",          "alpha",      "batch",    "deterministic", "limit",          "format",
      "out",            "images",     "labels",   "path",         "checkpoints",     "sigma",
      "delta",          "seeds",      "damping",  "probabilities", "reverse",        "kernel_n",
      "kernel_features", "sandwich_dim", "sandwich_samples", "feature_scale", "tolerances"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw PreconditionError("unknown_config_key", key);
  }
  const int version = j.value("schema_version", 0);
  if (version != kConfigSchemaVersion) {
    throw PreconditionError("schema_version", "expected schema_version " + std::to_string(kConfigSchemaVersion));
  }
  ExperimentConfig c;
  try {
    read_val(j, "subcommand", c.subcommand);
    read_val(j, "seed", c.seed);
    read_opt(j, "steps", c.steps);
    if (j.contains("lambda")) {
      const auto& l = j.at("lambda");
      c.lambdas = l.is_array() ? l.get<std::vector<double>>() : std::vector<double>{l.get<double>()};
    }
    read_opt(j, "eta", c.eta);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "batch", c.batch);
    read_val(j, "deterministic", c.deterministic);
    read_val(j, "limit", c.limit);
    if (j.contains("format")) {
      const auto f = j.at("format").get<std::string>();
      if (f != "csv" && f != "json") throw PreconditionError("bad_format", "format must be csv or json");
      c.format = f == "csv" ? ReportFormat::Csv : ReportFormat::Json;
    }
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("images")) c.images = j.at("images").get<std::string>();
    if (j.contains("labels")) c.labels = j.at("labels").get<std::string>();
    if (j.contains("path")) c.path_file = j.at("path").get<std::string>();
    if (j.contains("checkpoints")) c.checkpoint_dir = j.at("checkpoints").get<std::string>();
    read_val(j, "sigma", c.sigma);
    read_val(j, "delta", c.delta);
    read_val(j, "seeds", c.seeds);
    read_val(j, "damping", c.damping);
    read_val(j, "probabilities", c.probabilities);
    read_val(j, "reverse", c.reverse);
    read_val(j, "kernel_n", c.kernel_n);
    read_val(j, "kernel_features", c.kernel_features);
    read_val(j, "sandwich_dim", c.sandwich_dim);
    read_val(j, "sandwich_samples", c.sandwich_samples);
    read_val(j, "feature_scale", c.feature_scale);
    if (j.contains("tolerances")) c.tolerances = j.at("tolerances").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError("config_type_error", e.what());
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["subcommand"] = c.subcommand;
  j["seed"] = c.seed;
  auto opt = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  opt("steps", c.steps);
  if (!c.lambdas.empty()) j["lambda"] = c.lambdas;
  opt("eta", c.eta);
  opt("gamma", c.gamma);
  opt("alpha", c.alpha);
  opt("batch", c.batch);
  j["deterministic"] = c.deterministic;
  j["limit"] = c.limit;
  if (!c.images.empty()) j["images"] = c.images.filename().string();
  if (!c.labels.empty()) j["labels"] = c.labels.filename().string();
  if (!c.path_file.empty()) j["path"] = c.path_file.filename().string();
  j["sigma"] = c.sigma;
  j["delta"] = c.delta;
  j["seeds"] = c.seeds;
  j["damping"] = c.damping;
  if (!c.probabilities.empty()) j["probabilities"] = c.probabilities;
  j["reverse"] = c.reverse;
  j["kernel_n"] = c.kernel_n;
  j["kernel_features"] = c.kernel_features;
  j["sandwich_dim"] = c.sandwich_dim;
  j["sandwich_samples"] = c.sandwich_samples;
  j["feature_scale"] = c.feature_scale;
  if (!c.tolerances.empty()) j["tolerances"] = c.tolerances;
  return j.dump();
}

Check check_le(std::string name, double residual, double threshold, Params params) {
  Check c;
  c.name = std::move(name);
  c.params = std::move(params);
  c.residual = residual;
  c.threshold = threshold;
  c.pass = residual <= threshold;
  return c;
}

std::string check_json(const Check& c) {
  ordered_json j;
  j["check"] = c.name;
  ordered_json p = ordered_json::object();
  for (const auto& [k, v] : c.params) p[k] = v;
  j["params"] = std::move(p);
  j["residual"] = std::isfinite(c.residual) ? ordered_json(c.residual) : ordered_json(num(c.residual));
  j["threshold"] = c.threshold;
  j["pass"] = c.pass;
  return j.dump();
}

bool ExperimentResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check& ExperimentResult::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range("no check named " + name);
}

double log_slope(const std::vector<double>& values, std::size_t from, std::size_t to) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t k = from; k <= to && k < values.size(); ++k) {
    if (!(values[k] > 0.0)) continue;
    const double x = static_cast<double>(k), y = std::log(values[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult res;
  const auto t0 = Clock::now();
  if (c.subcommand == "demo2d") {
    res = run_demo2d(c);
  } else if (c.subcommand == "verify-identity") {
    res = run_verify_identity(c);
  } else if (c.subcommand == "mnist-linear") {
    res = run_mnist(c, false);
  } else if (c.subcommand == "mnist-logistic") {
    res = run_mnist(c, true);
  } else if (c.subcommand == "kernel-demo") {
    res = run_kernel_demo(c);
  } else if (c.subcommand == "variance-mc") {
    res = run_variance_mc(c);
  } else if (c.subcommand == "sandwich") {
    res = run_sandwich(c);
  } else if (c.subcommand == "l1-hull") {
    res = run_l1_hull(c);
  } else if (c.subcommand == "sweep") {
    res = run_sweep(c);
  } else if (c.subcommand == "avg-geometric") {
    res = run_avg_geometric(c);
  } else {
    throw PreconditionError("unknown_subcommand", "'" + c.subcommand + "'");
  }
  res.subcommand = c.subcommand;
  res.timings.emplace_back("wall_clock_seconds", seconds_since(t0));
  return res;
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  if (config.out_dir.empty()) return;
  fs::create_directories(config.out_dir);
  const char* ext = config.format == ReportFormat::Csv ? ".csv" : ".json";
  for (const auto& r : result.reports) write_report(r, config.out_dir / (r.experiment + ext), config.format);
  for (const auto& [name, contents] : result.files) {
    std::ofstream os(config.out_dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (config.out_dir / name).string());
    os << contents;
  }
  {
    std::ofstream os(config.out_dir / "checks.json", std::ios::binary);
    os << "[\n";
    for (std::size_t i = 0; i < result.checks.size(); ++i)
      os << "  " << check_json(result.checks[i]) << (i + 1 < result.checks.size() ? ",\n" : "\n");
    os << "]\n";
  }
  {
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : result.timings) t[k] = v;
    std::ofstream os(config.out_dir / "timing.json", std::ios::binary);
    os << t.dump(1) << '\n';
  }
}

}  // namespace iteravg
