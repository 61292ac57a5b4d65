#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mixrom::io {

/// Shortest decimal string that parses back to the same double.
[[nodiscard]] std::string format_double(double v);

/// Strict parse of a full string as double; throws IoError.
[[nodiscard]] double parse_double(std::string_view s);

/// Writes to `<path>.tmp` and renames over `path`. Creates parent directories.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

[[nodiscard]] std::string read_text(const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws IoError when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

/// Minimal CSV reader for the comma-separated, unquoted files this project writes.
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

/// Joins fields with commas and a trailing newline.
[[nodiscard]] std::string csv_line(const std::vector<std::string>& fields);

}  // namespace mixrom::io
