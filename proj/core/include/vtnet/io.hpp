#pragma once

#include <filesystem>
#include <string>

namespace vtnet::io {

// Whole-file read; throws IoError.
std::string read_file(const std::filesystem::path& path);

// Atomic replace: writes to a sibling temp file, then renames over the
// target. Throws IoError.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

// Shortest round-trip decimal form (std::to_chars).
std::string format_double(double v);

// Strict full-string parse; returns false on trailing junk or empty input.
bool parse_double(const std::string& s, double& out);
bool parse_long(const std::string& s, long& out);

}  // namespace vtnet::io
