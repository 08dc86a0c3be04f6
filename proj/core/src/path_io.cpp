#include "iteravg/path_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace iteravg {

using nlohmann::json;

namespace {
constexpr const char* kFormat = "iteravg-path";
constexpr int kVersion = 1;
}  // namespace

void write_path(const PathRecord& path, std::ostream& os) {
  json header = {
      {"format", kFormat},
      {"version", kVersion},
      {"optimizer", path.optimizer},
      {"fingerprint", path.problem_fingerprint},
      {"noise", path.noise},
      {"seed", path.seed},
      {"lambda", path.lambda},
      {"momentum_alpha", path.momentum_alpha},
      {"rates", {{"constant", path.rates.is_constant()}, {"values", path.rates.values()}}},
      {"count", path.iterates.size()},
      {"dim", path.dim()},
  };
  os << header.dump() << '\n';
  for (const Vector& w : path.iterates) {
    json row = json::array();
    for (Index i = 0; i < w.size(); ++i) row.push_back(w(i));
    os << row.dump() << '\n';
  }
  if (!os) throw std::runtime_error("failed writing path record");
}

PathRecord read_path(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("path record is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("path header is not JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kFormat) {
    throw FormatError("not an iteravg path record");
  }
  if (header.value("version", 0) != kVersion) throw FormatError("unsupported path record version");

  PathRecord path;
  try {
    path.optimizer = header.at("optimizer").get<std::string>();
    path.problem_fingerprint = header.at("fingerprint").get<std::string>();
    path.noise = header.at("noise").get<std::string>();
    path.seed = header.at("seed").get<std::uint64_t>();
    path.lambda = header.at("lambda").get<double>();
    path.momentum_alpha = header.at("momentum_alpha").get<double>();
    const auto& rates = header.at("rates");
    auto values = rates.at("values").get<std::vector<double>>();
    path.rates = rates.at("constant").get<bool>() ? RateSequence::constant(values.at(0))
                                                  : RateSequence::sequence(std::move(values));
    const auto count = header.at("count").get<std::size_t>();
    const auto dim = header.at("dim").get<Index>();
    path.iterates.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(is, line)) {
        throw FormatError("path record truncated at iterate " + std::to_string(k));
      }
      const json row = json::parse(line);
      if (!row.is_array() || static_cast<Index>(row.size()) != dim) {
        throw FormatError("iterate " + std::to_string(k) + " has wrong length");
      }
      Vector w(dim);
      for (Index i = 0; i < dim; ++i) w(i) = row[static_cast<std::size_t>(i)].get<double>();
      path.iterates.push_back(std::move(w));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed path record: ") + e.what());
  }
  return path;
}

void save_path(const PathRecord& path, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  write_path(path, os);
}

PathRecord load_path(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  return read_path(is);
}

}  // namespace iteravg
