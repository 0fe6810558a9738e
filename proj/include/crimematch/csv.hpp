#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crimematch::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

/// A delimiter-separated file held in memory. Quoted fields follow RFC 4180
/// (doubled quotes inside quotes); embedded newlines are not supported.
struct Table {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<Row> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Like column(), but throws a data error naming the missing column.
  std::size_t require_column(std::string_view name, std::string_view module) const;
};

Table read(const std::filesystem::path& path, char delimiter = ',');
std::vector<std::string> split_line(std::string_view line, char delimiter = ',');

std::string escape(std::string_view field, char delimiter = ',');

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Writes `text` to `path`, creating parent directories. Throws a data error
/// on failure.
void write_file(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace crimematch::csv
