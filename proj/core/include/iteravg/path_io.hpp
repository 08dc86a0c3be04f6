#pragma once

#include "iteravg/optimizers.hpp"

#include <filesystem>
#include <iosfwd>

namespace iteravg {

/// JSON-lines: one header object, then one array per iterate. Doubles are
/// written in shortest round-trip form, so read(write(p)) == p bit for bit.
void write_path(const PathRecord& path, std::ostream& os);
PathRecord read_path(std::istream& is);

void save_path(const PathRecord& path, const std::filesystem::path& file);
PathRecord load_path(const std::filesystem::path& file);

}  // namespace iteravg
