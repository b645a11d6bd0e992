#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace llmpoet::io {

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

void append_file(const std::filesystem::path& path, std::string_view content);

/// Shortest representation that round-trips to the same double.
std::string format_double(double value);

}  // namespace llmpoet::io
