#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace bdz::csv {

/// A parsed CSV document: header plus data rows. Fields are unquoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of the named column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Index of the named column; throws MissingColumn.
  std::size_t require(std::string_view name) const;
};

/// Splits one logical record. Handles RFC-4180 quoting ("" escapes).
std::vector<std::string> split_record(std::string_view line);

/// Reads a comma-separated document with a header row. Quoted fields may
/// span lines. Blank lines are skipped; a UTF-8 BOM is stripped.
Table read(std::istream& in);
Table read_file(const std::string& path);

/// Fixed 10-significant-digit formatting used by every artifact writer.
std::string format(double value);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace bdz::csv
