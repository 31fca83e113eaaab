#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chargecast::csv {

/// A CSV file held in memory: one header row plus string cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int find(std::string_view name) const;
  /// Index of a header column; throws InputError naming the file when absent.
  int require(std::string_view name, std::string_view context) const;
};

/// Splits one CSV record. Handles double-quoted fields with embedded commas and "".
std::vector<std::string> split_line(std::string_view line);

Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Shortest round-trip representation, so CSV output is byte-stable.
std::string format_double(double v);

}  // namespace chargecast::csv
