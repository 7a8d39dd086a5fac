#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "bdz/smoothing.hpp"
#include "bdz/types.hpp"

namespace bdz {

using Point2 = std::pair<double, double>;

/// Euclidean distance matrix between centroids.
Mat pairwise_distances(const std::vector<Point2>& centroids);

/// Integral over [0, Q] of the squared difference of two fitted profiles.
/// Throws BasisMismatch unless both were fitted on the same quadrature grid.
double profile_l2_distance(const SmoothedProfile& a, const SmoothedProfile& b, const BasisSystem& basis);

/// Lag bins centred on multiples of `width`: bin b (1-based) collects pairs
/// with distance in ((b - 1/2) width, (b + 1/2) width].
struct LagSpec {
  double width = 20.0;
  int bins = 0;

  /// Width = cell size, bins reaching half of the maximum pairwise distance
  /// (at least one bin).
  static LagSpec standard(double cell_size, double max_distance);
};

struct EmpiricalVariogram {
  std::vector<double> lag_centers;
  std::vector<double> mean_distance;  // NaN for empty bins
  std::vector<std::optional<double>> semivariance;  // gamma-hat, empty bins unset
  std::vector<long long> pair_counts;
};

EmpiricalVariogram trace_variogram(const std::vector<SmoothedProfile>& profiles, const std::vector<Point2>& centroids,
                                   const BasisSystem& basis, const LagSpec& lags);

}  // namespace bdz
