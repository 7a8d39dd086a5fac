#include "bdz/census.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "bdz/csv.hpp"
#include "bdz/error.hpp"

namespace bdz {

std::optional<StemStatus> parse_status(std::string_view text) {
  std::string norm;
  for (char c : text) {
    if (c == ' ' || c == '.' || c == '-') {
      norm.push_back('_');
    } else {
      norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (norm == "alive") return StemStatus::alive;
  if (norm == "dead") return StemStatus::dead;
  if (norm == "lost_stem") return StemStatus::lost_stem;
  if (norm == "missing") return StemStatus::missing;
  if (norm == "prior") return StemStatus::prior;
  return std::nullopt;
}

std::string_view to_string(StemStatus status) {
  switch (status) {
    case StemStatus::alive: return "alive";
    case StemStatus::dead: return "dead";
    case StemStatus::lost_stem: return "lost_stem";
    case StemStatus::missing: return "missing";
    case StemStatus::prior: return "prior";
  }
  return "unknown";
}

std::pair<double, double> GridSpec::centroid(int cell) const {
  return {origin_x + (x_index(cell) + 0.5) * cell_size, origin_y + (y_index(cell) + 0.5) * cell_size};
}

std::optional<int> GridSpec::locate(double x, double y) const {
  auto axis = [this](double v, double origin, int n) -> std::optional<int> {
    const double rel = (v - origin) / cell_size;
    if (!(rel >= 0.0) || rel > n) return std::nullopt;
    int k = static_cast<int>(std::floor(rel));
    if (k == n) k = n - 1;  // upper plot edge
    return k;
  };
  auto ix = axis(x, origin_x, nx);
  auto iy = axis(y, origin_y, ny);
  if (!ix || !iy) return std::nullopt;
  return cell_id(*ix, *iy);
}

void GridSpec::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw Error(ErrorKind::BadConfig, "grid cell_size must be positive");
  }
  if (nx < 1 || ny < 1) throw Error(ErrorKind::BadConfig, "grid needs nx, ny >= 1");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw Error(ErrorKind::BadConfig, "grid origin must be finite");
  }
}

namespace {

ParseIssue issue(std::size_t row, std::string field, std::string message) {
  return ParseIssue{row, std::move(field), std::move(message)};
}

bool is_na(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "NULL";
}

}  // namespace

ParseResult parse_stem_records(std::istream& in, const ParseOptions& options) {
  const csv::Table table = csv::read(in);
  const ColumnMap& cm = options.columns;
  const std::size_t c_stem = table.require(cm.stem_id);
  const std::size_t c_tree = table.require(cm.tree_id);
  const std::size_t c_sp = table.require(cm.species);
  const std::size_t c_x = table.require(cm.x);
  const std::size_t c_y = table.require(cm.y);
  const std::size_t c_dbh = table.require(cm.dbh);
  const std::size_t c_status = table.require(cm.status);
  const std::size_t width = std::max({c_stem, c_tree, c_sp, c_x, c_y, c_dbh, c_status}) + 1;

  ParseResult result;
  result.records.reserve(table.rows.size());
  std::unordered_set<std::string> seen;
  seen.reserve(table.rows.size());

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t row_no = r + 1;
    std::optional<ParseIssue> bad;
    StemRecord rec;

    auto coordinate = [&](std::size_t col, const std::string& name) -> double {
      try {
        const double v = csv::parse_double(row[col]);
        if (v < 0.0) {
          bad = issue(row_no, name, "negative coordinate");
          return 0.0;
        }
        return v;
      } catch (const Error&) {
        bad = issue(row_no, name, "unparseable coordinate '" + row[col] + "'");
        return 0.0;
      }
    };

    if (row.size() < width) {
      bad = issue(row_no, "", "row has " + std::to_string(row.size()) + " fields");
    } else {
      rec.stem_id = row[c_stem];
      rec.tree_id = row[c_tree];
      rec.species = row[c_sp];
      rec.x = coordinate(c_x, cm.x);
      if (!bad) rec.y = coordinate(c_y, cm.y);
      if (!bad) {
        if (auto st = parse_status(row[c_status])) {
          rec.status = *st;
        } else {
          bad = issue(row_no, cm.status, "unknown status '" + row[c_status] + "'");
        }
      }
      if (!bad) {
        if (is_na(row[c_dbh])) {
          result.warnings.push_back(issue(row_no, cm.dbh, "dbh missing"));
        } else {
          try {
            const double d = csv::parse_double(row[c_dbh]);
            if (d > 0.0) {
              rec.dbh = d;
            } else {
              result.warnings.push_back(issue(row_no, cm.dbh, "non-positive dbh treated as missing"));
            }
          } catch (const Error&) {
            bad = issue(row_no, cm.dbh, "unparseable dbh '" + row[c_dbh] + "'");
          }
        }
      }
      if (!bad && rec.stem_id.empty()) bad = issue(row_no, cm.stem_id, "empty stem id");
      if (!bad && !seen.insert(rec.stem_id).second) {
        if (options.strict) {
          throw Error(ErrorKind::DuplicateStem, "duplicate stem id '" + rec.stem_id + "' at row " +
                                                    std::to_string(row_no));
        }
        bad = issue(row_no, cm.stem_id, "duplicate stem id '" + rec.stem_id + "'");
      }
    }

    if (bad) {
      if (options.strict) {
        throw Error(ErrorKind::MalformedRow,
                    "row " + std::to_string(bad->row) + " field '" + bad->field + "': " + bad->message);
      }
      result.rejected.push_back(std::move(*bad));
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_stem_records_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IOError, "cannot open '" + path + "'");
  return parse_stem_records(in, options);
}

void RegionMask::set(int cell, bool value) {
  if (cell < 0 || cell >= static_cast<int>(cells_.size())) {
    throw Error(ErrorKind::OutOfBounds, "mask cell " + std::to_string(cell) + " outside grid");
  }
  cells_[cell] = value ? 1 : 0;
}

std::size_t RegionMask::size() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), 1));
}

std::vector<int> RegionMask::cells() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

RegionMask RegionMask::read_csv(std::istream& in, const GridSpec& spec) {
  const csv::Table table = csv::read(in);
  const std::size_t cx = table.require("x_index");
  const std::size_t cy = table.require("y_index");
  RegionMask mask(spec);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() <= std::max(cx, cy)) {
      throw Error(ErrorKind::MalformedRow, "mask row " + std::to_string(r + 1) + " is short");
    }
    const auto ix = csv::parse_int(row[cx]);
    const auto iy = csv::parse_int(row[cy]);
    if (ix < 0 || iy < 0 || ix >= spec.nx || iy >= spec.ny) {
      throw Error(ErrorKind::OutOfBounds, "mask cell (" + row[cx] + "," + row[cy] + ") outside grid");
    }
    mask.set(spec.cell_id(static_cast<int>(ix), static_cast<int>(iy)));
  }
  return mask;
}

RegionMask RegionMask::uncovered(const std::vector<StemRecord>& primary, const GridSpec& spec) {
  std::vector<char> covered(spec.cells(), 0);
  for (const auto& s : primary) {
    if (auto c = spec.locate(s.x, s.y)) covered[*c] = 1;
  }
  RegionMask mask(spec);
  for (int c = 0; c < spec.cells(); ++c) {
    if (!covered[c]) mask.set(c);
  }
  return mask;
}

std::vector<StemRecord> merge_censuses(const std::vector<StemRecord>& primary,
                                       const std::vector<StemRecord>& fallback,
                                       const RegionMask& mask) {
  std::unordered_set<std::string> ids;
  ids.reserve(primary.size());
  for (const auto& s : primary) ids.insert(s.stem_id);

  std::vector<StemRecord> out = primary;
  for (const auto& s : fallback) {
    const auto cell = mask.spec().locate(s.x, s.y);
    if (!cell || !mask.contains(*cell)) continue;
    if (!ids.insert(s.stem_id).second) {
      throw Error(ErrorKind::DuplicateStem, "stem id '" + s.stem_id + "' appears in both censuses inside the mask");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<StemRecord> filter_alive_stems(const std::vector<StemRecord>& records, double min_dbh) {
  if (!(min_dbh >= 0.0)) throw Error(ErrorKind::BadConfig, "min_dbh must be >= 0");
  std::vector<StemRecord> out;
  for (const auto& s : records) {
    if (s.status == StemStatus::alive && s.dbh && *s.dbh > min_dbh) out.push_back(s);
  }
  return out;
}

std::vector<TreeRecord> collapse_to_trees(const std::vector<StemRecord>& stems) {
  std::vector<TreeRecord> trees;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& s : stems) {
    const double d = s.dbh.value_or(0.0);
    auto [it, inserted] = index.emplace(s.tree_id, trees.size());
    if (inserted) {
      trees.push_back(TreeRecord{s.tree_id, s.species, s.x, s.y, d});
    } else {
      auto& t = trees[it->second];
      t.max_dbh = std::max(t.max_dbh, d);
    }
  }
  return trees;
}

std::vector<TreeRecord> filter_alive_trees(const std::vector<StemRecord>& records, double min_dbh) {
  return collapse_to_trees(filter_alive_stems(records, min_dbh));
}

long long AbundanceGrid::total() const {
  long long n = 0;
  for (const auto& cell : counts) {
    for (const auto& [sp, c] : cell) n += c;
  }
  return n;
}

std::map<std::string, long long> AbundanceGrid::species_totals() const {
  std::map<std::string, long long> totals;
  for (const auto& cell : counts) {
    for (const auto& [sp, c] : cell) totals[sp] += c;
  }
  return totals;
}

AbundanceGrid bin_to_grid(const std::vector<TreeRecord>& trees, const GridSpec& spec) {
  spec.validate();
  AbundanceGrid grid{spec, std::vector<std::map<std::string, long long>>(spec.cells())};
  for (const auto& t : trees) {
    const auto cell = spec.locate(t.x, t.y);
    if (!cell) {
      throw Error(ErrorKind::OutOfBounds, "tree '" + t.tree_id + "' at (" + csv::format(t.x) + ", " +
                                              csv::format(t.y) + ") lies outside the grid");
    }
    if (t.species.empty()) throw Error(ErrorKind::MalformedRow, "tree '" + t.tree_id + "' has no species");
    ++grid.counts[*cell][t.species];
  }
  return grid;
}

}  // namespace bdz
