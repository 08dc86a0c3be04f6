#pragma once

#include "iteravg/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iteravg {

struct Dataset {
  Matrix x;  // rows = samples, pixels scaled to [0, 1]
  Matrix y;  // one-hot
  std::vector<std::uint8_t> labels;
  std::string provenance;
};

/// Reads an IDX image file (magic 0x803) and label file (magic 0x801),
/// gunzipping when the name ends in ".gz". `limit` keeps the first rows.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit = std::nullopt, int classes = 10);

/// Writes IDX files (gzip when the name ends in ".gz").
void write_idx_images(const std::filesystem::path& file, std::size_t count, std::uint32_t rows, std::uint32_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& file, std::span<const std::uint8_t> labels);

Matrix one_hot(std::span<const std::uint8_t> labels, int classes);

struct ReportRow {
  std::size_t iter;
  double err_plain_vs_reg_l1;
  double err_avg_vs_reg_l1;
  double p_k;
};

struct Report {
  std::string experiment;
  std::string config_json;  // echo of the effective configuration
  std::vector<ReportRow> rows;
  std::optional<double> wall_clock_seconds;
};

enum class ReportFormat { Csv, Json };

/// CSV: header iter,err_plain_vs_reg_l1,err_avg_vs_reg_l1,P_k then one row per
/// iteration with 17 significant digits.
void write_report(const Report& report, const std::filesystem::path& file, ReportFormat format);
std::string report_csv(const Report& report);
std::string report_json(const Report& report);
Report read_report_csv(const std::filesystem::path& file);

/// Error curves ||w_k - w^_k||_1 and ||w~_k - w^_k||_1 as report rows.
std::vector<ReportRow> error_rows(const std::vector<Vector>& plain, const std::vector<Vector>& averaged,
                                  const std::vector<Vector>& regularized, const std::vector<double>& cumulative);

}  // namespace iteravg
