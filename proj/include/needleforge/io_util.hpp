#pragma once

#include <string>

namespace needleforge {

/// Reads a whole file; throws DataError naming the path when it cannot be opened.
std::string read_file(const std::string& path);

/// Writes to `path + ".tmp"` then renames over `path`, so readers never see a
/// partial file. Throws DataError on failure.
void write_file_atomic(const std::string& path, const std::string& content);

/// Formats a double with enough digits to round-trip exactly (%.17g).
std::string format_double(double v);

}  // namespace needleforge
