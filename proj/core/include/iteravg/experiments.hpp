#pragma once

#include "iteravg/data_io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace iteravg {

inline constexpr int kConfigSchemaVersion = 1;

/// Everything a subcommand can be configured with. Unset optionals take the
/// subcommand's default (see docs/config.md).
struct ExperimentConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::optional<std::size_t> steps;
  std::vector<double> lambdas;
  std::optional<double> eta;
  std::optional<double> gamma;
  std::optional<double> alpha;
  std::optional<Index> batch;
  bool deterministic = false;
  std::size_t limit = 2000;
  ReportFormat format = ReportFormat::Csv;
  std::filesystem::path out_dir;

  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path path_file;
  std::filesystem::path checkpoint_dir;

  double sigma = 0.5;
  double delta = 0.1;
  std::size_t seeds = 200;
  double damping = 1e-2;
  std::vector<double> probabilities;
  bool reverse = false;
  std::size_t kernel_n = 30;
  std::size_t kernel_features = 120;
  std::size_t sandwich_dim = 10;
  std::size_t sandwich_samples = 200;
  double feature_scale = 1.0;
  std::map<std::string, double> tolerances;

  double tolerance(const std::string& name, double fallback) const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

const std::vector<std::string>& subcommands();

struct Check {
  std::string name;
  std::vector<std::pair<std::string, double>> params;
  double residual = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// pass = residual <= threshold (NaN fails).
Check check_le(std::string name, double residual, double threshold,
               std::vector<std::pair<std::string, double>> params = {});

std::string check_json(const Check& c);

struct ExperimentResult {
  std::string subcommand;
  std::vector<Check> checks;
  std::vector<Report> reports;
  std::vector<std::pair<std::string, std::string>> files;  // name -> contents
  std::vector<std::pair<std::string, double>> timings;

  bool passed() const;
  const Check& check(const std::string& name) const;
};

/// Validates and runs one subcommand. Throws PreconditionError for invalid
/// configurations before any optimization starts.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes reports, auxiliary files, checks.json and timing.json to config.out_dir.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config);

/// Least-squares slope of log(values[k]) over k in [from, to], skipping zeros.
double log_slope(const std::vector<double>& values, std::size_t from, std::size_t to);

}  // namespace iteravg
