#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace delaylab {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

/// Strict full-string number parse; throws Error(parse) on junk.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

/// Current UTC time, ISO-8601 with milliseconds ("2024-01-01T12:00:00.000Z").
std::string utc_timestamp();

std::string read_file(const std::filesystem::path &path);

/// Write via a temporary sibling and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

/// Translate a byte offset into "line L, column C" for diagnostics.
std::string describe_offset(std::string_view text, std::size_t offset);

} // namespace delaylab
