#include "bdz/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bdz/error.hpp"

namespace bdz {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicateStem: return "DuplicateStem";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::BasisMismatch: return "BasisMismatch";
    case ErrorKind::DuplicateSites: return "DuplicateSites";
    case ErrorKind::SingularV: return "SingularV";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::NonPD: return "NonPD";
    case ErrorKind::DegenerateRow: return "DegenerateRow";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::GlassoNonConvergence: return "GlassoNonConvergence";
    case ErrorKind::LogitNonConvergence: return "LogitNonConvergence";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::AllRestartsFailed: return "AllRestartsFailed";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::IOError: return "IOError";
  }
  return "Unknown";
}

}  // namespace bdz

namespace bdz::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require(std::string_view name) const {
  if (auto idx = column(name)) return *idx;
  throw Error(ErrorKind::MissingColumn, "missing column '" + std::string(name) + "'");
}

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

namespace {

bool quotes_balanced(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += (c == '"');
  return n % 2 == 0;
}

}  // namespace

Table read(std::istream& in) {
  Table table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    while (!quotes_balanced(line)) {
      std::string more;
      if (!std::getline(in, more)) break;
      line += '\n';
      line += more;
    }
    if (!have_header && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.empty() || line == "\r") continue;
    auto fields = split_record(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw Error(ErrorKind::MissingColumn, "CSV input has no header row");
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IOError, "cannot open '" + path + "'");
  return read(in);
}

std::string format(double value) {
  if (std::isnan(value)) return "NA";
  if (value == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw Error(ErrorKind::MalformedRow, "not a finite number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  text = trim(text);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::MalformedRow, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace bdz::csv
