#pragma once

#include <filesystem>
#include <functional>
#include <ostream>

namespace qhd::detail {

/// Writes through a sibling temporary file and renames it into place, so
/// readers never observe a partially written file.
void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body,
                      bool binary = true);

}  // namespace qhd::detail
