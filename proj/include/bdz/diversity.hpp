#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bdz {

/// Strictly positive proportions summing to one (within 1e-12).
class RelativeAbundance {
 public:
  explicit RelativeAbundance(std::vector<double> proportions);

  /// Zero counts are dropped; throws EmptyCell when nothing remains.
  static RelativeAbundance from_counts(const std::map<std::string, long long>& counts);
  static RelativeAbundance from_counts(std::span<const double> counts);

  std::span<const double> values() const { return p_; }
  std::size_t richness() const { return p_.size(); }

 private:
  std::vector<double> p_;
};

/// Orders of diversity on [0, Q]. Strictly increasing, starts at 0 and
/// contains 1.
struct QGrid {
  std::vector<double> q;
  double upper = 5.0;

  /// n equally spaced orders on [0, Q]; throws BadConfig unless q = 1 lands
  /// on the grid.
  static QGrid uniform(double Q = 5.0, int n = 101);
  void validate() const;
};

/// Window around q = 1 inside which the Shannon limit is used.
inline constexpr double kShannonWindow = 1e-8;

/// Hill number of order q (effective number of species).
double hill_number(const RelativeAbundance& p, double q);

double shannon_entropy(const RelativeAbundance& p);
double gini_simpson(const RelativeAbundance& p);

struct ProfilePoints {
  std::vector<double> q;
  std::vector<double> h;
};

ProfilePoints profile_points(const RelativeAbundance& p, const QGrid& grid);

}  // namespace bdz
