#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smood {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-token parse; std::nullopt on any trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Numeric table addressed by column name; every cell is a finite double.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  bool has(std::string_view name) const;
  /// Throws InvalidArgument naming the missing column.
  const std::vector<double>& column(std::string_view name) const;
  void add(std::string name, std::vector<double> values);
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv_table(const std::string& text, const std::string& source);
CsvTable load_csv_table(const std::filesystem::path& path);

}  // namespace smood
