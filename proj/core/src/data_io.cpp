#include "iteravg/data_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace iteravg {

namespace {

bool gzipped(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& file) {
  std::vector<std::uint8_t> out;
  if (gzipped(file)) {
    gzFile gz = gzopen(file.string().c_str(), "rb");
    if (!gz) throw std::runtime_error("cannot open " + file.string());
    std::uint8_t buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    int err = 0;
    const char* msg = gzerror(gz, &err);
    const bool bad = n < 0 || (err != Z_OK && err != Z_STREAM_END);
    const std::string detail = msg ? msg : "";
    gzclose(gz);
    if (bad) throw FormatError("gzip error in " + file.string() + ": " + detail);
    return out;
  }
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  out.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  return out;
}

void write_bytes(const std::filesystem::path& file, const std::vector<std::uint8_t>& bytes) {
  if (gzipped(file)) {
    gzFile gz = gzopen(file.string().c_str(), "wb");
    if (!gz) throw std::runtime_error("cannot open " + file.string() + " for writing");
    const int n = gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int rc = gzclose(gz);
    if (n != static_cast<int>(bytes.size()) || rc != Z_OK) throw std::runtime_error("gzip write failed");
    return;
  }
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + file.string());
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::filesystem::path& file) {
  if (off + 4 > b.size()) {
    throw FormatError("truncated IDX header at offset " + std::to_string(off) + " in " + file.string());
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit, int classes) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);

  const std::uint32_t img_magic = be32(img, 0, images);
  if (img_magic != 0x00000803u) {
    throw FormatError("bad magic " + hex(img_magic) + " at offset 0 in " + images.string() + " (expected 0x00000803)");
  }
  const std::uint32_t lab_magic = be32(lab, 0, labels);
  if (lab_magic != 0x00000801u) {
    throw FormatError("bad magic " + hex(lab_magic) + " at offset 0 in " + labels.string() + " (expected 0x00000801)");
  }
  const std::size_t n_img = be32(img, 4, images);
  const std::size_t rows = be32(img, 8, images);
  const std::size_t cols = be32(img, 12, images);
  const std::size_t n_lab = be32(lab, 4, labels);
  if (n_img != n_lab) {
    throw FormatError("image count " + std::to_string(n_img) + " does not match label count " + std::to_string(n_lab));
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n_img * pixels) {
    throw FormatError("image data truncated at offset " + std::to_string(img.size()) + " in " + images.string() +
                      " (expected " + std::to_string(16 + n_img * pixels) + " bytes)");
  }
  if (lab.size() < 8 + n_lab) {
    throw FormatError("label data truncated at offset " + std::to_string(lab.size()) + " in " + labels.string());
  }
  const std::size_t n = limit ? std::min(*limit, n_img) : n_img;

  Dataset ds;
  ds.x.resize(static_cast<Index>(n), static_cast<Index>(pixels));
  ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* src = img.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j) ds.x(static_cast<Index>(i), static_cast<Index>(j)) = src[j] / 255.0;
  }
  ds.y = one_hot(ds.labels, classes);
  ds.provenance = images.filename().string() + " + " + labels.filename().string() + ", first " + std::to_string(n) +
                  " of " + std::to_string(n_img) + " rows";
  return ds;
}

void write_idx_images(const std::filesystem::path& file, std::size_t count, std::uint32_t rows, std::uint32_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (pixels.size() != count * rows * cols) {
    throw PreconditionError("dimension_mismatch", "pixel buffer does not match count * rows * cols");
  }
  std::vector<std::uint8_t> b;
  b.reserve(16 + pixels.size());
  put_be32(b, 0x803);
  put_be32(b, static_cast<std::uint32_t>(count));
  put_be32(b, rows);
  put_be32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  write_bytes(file, b);
}

void write_idx_labels(const std::filesystem::path& file, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> b;
  b.reserve(8 + labels.size());
  put_be32(b, 0x801);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  write_bytes(file, b);
}

Matrix one_hot(std::span<const std::uint8_t> labels, int classes) {
  if (classes <= 0) throw PreconditionError("bad_classes", "class count must be positive");
  Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw FormatError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " exceeds class count");
    }
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

std::string report_csv(const Report& report) {
  std::string out = "iter,err_plain_vs_reg_l1,err_avg_vs_reg_l1,P_k\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.iter) + ',' + fmt17(r.err_plain_vs_reg_l1) + ',' + fmt17(r.err_avg_vs_reg_l1) + ',' +
           fmt17(r.p_k) + '\n';
  }
  return out;
}

std::string report_json(const Report& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["experiment"] = report.experiment;
  j["config"] = report.config_json.empty() ? ordered_json::object() : ordered_json::parse(report.config_json);
  if (report.wall_clock_seconds) j["wall_clock_seconds"] = *report.wall_clock_seconds;
  j["columns"] = {"iter", "err_plain_vs_reg_l1", "err_avg_vs_reg_l1", "P_k"};
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) rows.push_back({r.iter, r.err_plain_vs_reg_l1, r.err_avg_vs_reg_l1, r.p_k});
  j["rows"] = std::move(rows);
  return j.dump(1) + '\n';
}

void write_report(const Report& report, const std::filesystem::path& file, ReportFormat format) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os << (format == ReportFormat::Csv ? report_csv(report) : report_json(report));
  if (!os) throw std::runtime_error("write failed for " + file.string());
}

Report read_report_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line) || line != "iter,err_plain_vs_reg_l1,err_avg_vs_reg_l1,P_k") {
    throw FormatError("unexpected report header in " + file.string());
  }
  Report rep;
  rep.experiment = file.stem().string();
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    ReportRow r{};
    char* end = nullptr;
    const char* s = line.c_str();
    r.iter = std::strtoull(s, &end, 10);
    double* fields[3] = {&r.err_plain_vs_reg_l1, &r.err_avg_vs_reg_l1, &r.p_k};
    for (double* f : fields) {
      if (*end != ',') throw FormatError("malformed report line " + std::to_string(lineno));
      *f = std::strtod(end + 1, &end);
    }
    if (*end != '\0') throw FormatError("malformed report line " + std::to_string(lineno));
    rep.rows.push_back(r);
  }
  return rep;
}

std::vector<ReportRow> error_rows(const std::vector<Vector>& plain, const std::vector<Vector>& averaged,
                                  const std::vector<Vector>& regularized, const std::vector<double>& cumulative) {
  const std::size_t n = plain.size();
  if (averaged.size() != n || regularized.size() != n || cumulative.size() < n) {
    throw PreconditionError("length_mismatch", "error curves need equal-length inputs");
  }
  std::vector<ReportRow> rows;
  rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    rows.push_back({k, (plain[k] - regularized[k]).lpNorm<1>(), (averaged[k] - regularized[k]).lpNorm<1>(),
                     cumulative[k]});
  }
  return rows;
}

}  // namespace iteravg
