#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace delaylab {

/// Rectangular CSV table of strings with a header row. Fields containing
/// commas, quotes or newlines are quoted on output; quoted fields are
/// accepted on input.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const;
    /// Throws Error(validation) listing the available columns.
    std::size_t require_column(std::string_view name) const;

    static Table parse_csv(std::string_view text);
    static Table load_csv(const std::filesystem::path &path);
    std::string to_csv() const;
};

std::string csv_escape(std::string_view field);

} // namespace delaylab
