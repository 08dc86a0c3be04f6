// Command-line driver: one subcommand per experiment.
// Exit codes: 0 all checks pass, 1 some check failed, 2 bad configuration.

#include "iteravg/experiments.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::vector<double> lambdas;
  std::optional<double> eta;
  std::optional<double> gamma;
  std::optional<double> alpha;
  std::optional<long> batch;
  bool deterministic = false;
  std::optional<std::size_t> limit;
  std::string format;
  std::string images;
  std::string labels;
  std::string path;
  std::string checkpoints;
  bool reverse = false;
  std::vector<double> probabilities;
  std::optional<std::size_t> seeds;
  bool quiet = false;
};

const std::map<std::string, std::string> kAbout = {
    {"demo2d", "2-D toy: GD/PGD/NGD averaging vs explicit regularization"},
    {"verify-identity", "averaging identity on toy and kernel paths, constant and alternating rates"},
    {"mnist-linear", "least squares on an MNIST subset"},
    {"mnist-logistic", "softmax regression on an MNIST subset"},
    {"kernel-demo", "kernel GD with spectral weights vs (K + lambda_hat I)^-1 y"},
    {"variance-mc", "Monte Carlo deviation of the averaged iterate under sphere noise"},
    {"sandwich", "regularized paths bracketing the averaged path on a logistic problem"},
    {"l1-hull", "lasso solutions outside the GD path hull, ridge inside"},
    {"sweep", "re-average one stored path for many lambdas"},
    {"avg-geometric", "geometric average of checkpoint files"},
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file (schema_version 1)");
  app->add_option("--out", f.out, "output directory for reports");
  app->add_option("--seed", f.seed, "RNG seed");
  app->add_option("--steps", f.steps, "iterations");
  app->add_option("--lambda", f.lambdas, "regularization strength(s)")->delimiter(',');
  app->add_option("--eta", f.eta, "learning rate of the unregularized run");
  app->add_option("--gamma", f.gamma, "learning rate of the regularized run (sandwich only)");
  app->add_option("--alpha", f.alpha, "momentum strong-convexity parameter");
  app->add_option("--batch", f.batch, "minibatch size");
  app->add_flag("--deterministic", f.deterministic, "full-batch runs only");
  app->add_option("--limit", f.limit, "number of MNIST rows");
  app->add_option("--format", f.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--quiet", f.quiet, "only print failing checks");
}

iteravg::ExperimentConfig build_config(const std::string& sub, const Flags& f) {
  iteravg::ExperimentConfig c;
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    if (!is) throw iteravg::PreconditionError("config_unreadable", f.config);
    std::stringstream ss;
    ss << is.rdbuf();
    c = iteravg::config_from_json(ss.str());
    if (!c.subcommand.empty() && c.subcommand != sub) {
      throw iteravg::PreconditionError("subcommand_mismatch", "config is for '" + c.subcommand + "'");
    }
  }
  c.subcommand = sub;
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.steps) c.steps = *f.steps;
  if (!f.lambdas.empty()) c.lambdas = f.lambdas;
  if (f.eta) c.eta = *f.eta;
  if (f.gamma) c.gamma = *f.gamma;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.batch) c.batch = *f.batch;
  if (f.deterministic) c.deterministic = true;
  if (f.limit) c.limit = *f.limit;
  if (!f.format.empty()) c.format = f.format == "json" ? iteravg::ReportFormat::Json : iteravg::ReportFormat::Csv;
  if (!f.images.empty()) c.images = f.images;
  if (!f.labels.empty()) c.labels = f.labels;
  if (!f.path.empty()) c.path_file = f.path;
  if (!f.checkpoints.empty()) c.checkpoint_dir = f.checkpoints;
  if (f.reverse) c.reverse = true;
  if (!f.probabilities.empty()) c.probabilities = f.probabilities;
  if (f.seeds) c.seeds = *f.seeds;
  if ((sub == "mnist-linear" || sub == "mnist-logistic") && c.images.empty() && c.labels.empty()) {
    c.images = std::string(ITERAVG_DEFAULT_DATA_DIR) + "/train-images-idx3-ubyte.gz";
    c.labels = std::string(ITERAVG_DEFAULT_DATA_DIR) + "/train-labels-idx1-ubyte.gz";
  }
  return c;
}

void print_error(const std::string& condition, const std::string& detail) {
  std::cerr << R"({"error":")" << condition << R"(","detail":)" << std::quoted(detail) << "}\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterate averaging as regularization"};
  app.require_subcommand(1);
  Flags flags;
  for (const auto& name : iteravg::subcommands()) {
    CLI::App* sub = app.add_subcommand(name, kAbout.count(name) ? kAbout.at(name) : "");
    add_common(sub, flags);
    if (name == "mnist-linear" || name == "mnist-logistic") {
      sub->add_option("--images", flags.images, "IDX image file (.gz ok)");
      sub->add_option("--labels", flags.labels, "IDX label file (.gz ok)");
    }
    if (name == "sweep") sub->add_option("--path", flags.path, "stored path (.jsonl) to re-average");
    if (name == "variance-mc") sub->add_option("--seeds", flags.seeds, "Monte-Carlo seeds");
    if (name == "avg-geometric") {
      sub->add_option("--dir", flags.checkpoints, "directory of checkpoints")->required();
      sub->add_option("--p", flags.probabilities, "keep probabilities")->delimiter(',');
      sub->add_flag("--reverse", flags.reverse, "newest file first");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    const iteravg::ExperimentConfig config = build_config(sub, flags);
    const iteravg::ExperimentResult result = iteravg::run_experiment(config);
    iteravg::write_outputs(result, config);
    for (const auto& c : result.checks) {
      if (!flags.quiet || !c.pass) std::cout << iteravg::check_json(c) << '\n';
    }
    return result.passed() ? 0 : 1;
  } catch (const iteravg::PreconditionError& e) {
    print_error(e.condition(), e.what());
    return 2;
  } catch (const iteravg::FormatError& e) {
    print_error("format_error", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("runtime_error", e.what());
    return 3;
  }
}
