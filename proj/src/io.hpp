#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctos::io {

/// Shortest round-trip decimal representation.
std::string format_double(double v);
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace ctos::io
