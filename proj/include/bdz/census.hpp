#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bdz {

enum class StemStatus { alive, dead, lost_stem, missing, prior };

std::optional<StemStatus> parse_status(std::string_view text);
std::string_view to_string(StemStatus status);

struct StemRecord {
  std::string stem_id;
  std::string tree_id;
  std::string species;
  double x = 0.0;  // meters within plot
  double y = 0.0;
  std::optional<double> dbh;  // centimeters
  StemStatus status = StemStatus::alive;
};

struct TreeRecord {
  std::string tree_id;
  std::string species;
  double x = 0.0;
  double y = 0.0;
  double max_dbh = 0.0;
};

/// Rectangular lattice of square cells. Cell ids run x-fastest:
/// id = x_index + nx * y_index.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 20.0;
  int nx = 25;
  int ny = 35;

  int cells() const { return nx * ny; }
  int cell_id(int x_index, int y_index) const { return x_index + nx * y_index; }
  int x_index(int cell) const { return cell % nx; }
  int y_index(int cell) const { return cell / nx; }
  std::pair<double, double> centroid(int cell) const;

  /// Cell containing (x, y) under half-open intervals, with the last cell of
  /// each axis closed on its upper edge. nullopt when outside the lattice.
  std::optional<int> locate(double x, double y) const;

  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

/// Column names of the stem census file. Defaults follow the HF253 schema.
struct ColumnMap {
  std::string stem_id = "stem.id";
  std::string tree_id = "tree.id";
  std::string species = "sp";
  std::string x = "gx";
  std::string y = "gy";
  std::string dbh = "dbh";
  std::string status = "status";
};

struct ParseIssue {
  std::size_t row = 0;  // 1-based data row
  std::string field;
  std::string message;
};

struct ParseResult {
  std::vector<StemRecord> records;
  std::vector<ParseIssue> warnings;  // e.g. dbh "NA"
  std::vector<ParseIssue> rejected;  // rows skipped in lenient mode
};

struct ParseOptions {
  ColumnMap columns;
  /// Strict mode throws MalformedRow on the first bad row; lenient mode
  /// skips it and lists it under `rejected`.
  bool strict = true;
};

ParseResult parse_stem_records(std::istream& csv, const ParseOptions& options = {});
ParseResult parse_stem_records_file(const std::string& path, const ParseOptions& options = {});

/// Per-cell membership flags over a GridSpec.
class RegionMask {
 public:
  RegionMask() = default;
  explicit RegionMask(const GridSpec& spec) : spec_(spec), cells_(spec.cells(), false) {}

  const GridSpec& spec() const { return spec_; }
  void set(int cell, bool value = true);
  bool contains(int cell) const { return cells_.at(cell) != 0; }
  std::size_t size() const;
  std::vector<int> cells() const;

  /// Mask rows are (x_index, y_index) pairs.
  static RegionMask read_csv(std::istream& in, const GridSpec& spec);
  /// Cells holding no primary record at all; used to locate an unsurveyed
  /// region when no explicit mask is given.
  static RegionMask uncovered(const std::vector<StemRecord>& primary, const GridSpec& spec);

 private:
  GridSpec spec_;
  std::vector<char> cells_;
};

/// Keeps every primary record and adds fallback records located in masked
/// cells. Throws DuplicateStem when a stem id from the masked fallback is
/// already present in the primary census.
std::vector<StemRecord> merge_censuses(const std::vector<StemRecord>& primary,
                                       const std::vector<StemRecord>& fallback,
                                       const RegionMask& mask);

/// Stems with status alive and dbh strictly greater than min_dbh.
std::vector<StemRecord> filter_alive_stems(const std::vector<StemRecord>& records, double min_dbh);

/// Collapses stems to trees. A tree takes the location and species of its
/// first listed stem; max_dbh is the largest stem diameter.
std::vector<TreeRecord> collapse_to_trees(const std::vector<StemRecord>& stems);

/// filter_alive_stems followed by collapse_to_trees.
std::vector<TreeRecord> filter_alive_trees(const std::vector<StemRecord>& records, double min_dbh);

struct AbundanceGrid {
  GridSpec spec;
  /// counts[cell][species] >= 1; absent species are not stored.
  std::vector<std::map<std::string, long long>> counts;

  long long total() const;
  std::map<std::string, long long> species_totals() const;
};

AbundanceGrid bin_to_grid(const std::vector<TreeRecord>& trees, const GridSpec& spec);

}  // namespace bdz
