#include "bdz/variogram.hpp"

#include <cmath>
#include <limits>

#include "bdz/error.hpp"

namespace bdz {

Mat pairwise_distances(const std::vector<Point2>& centroids) {
  const auto n = static_cast<Eigen::Index>(centroids.size());
  if (n < 2) throw Error(ErrorKind::BadConfig, "need at least two centroids");
  Mat d = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = std::hypot(centroids[i].first - centroids[j].first, centroids[i].second - centroids[j].second);
    }
  }
  return d;
}

double profile_l2_distance(const SmoothedProfile& a, const SmoothedProfile& b, const BasisSystem& basis) {
  const auto n = static_cast<Eigen::Index>(basis.nodes.size());
  if (a.fitted.size() != n || b.fitted.size() != n || a.slope.size() != n || b.slope.size() != n) {
    throw Error(ErrorKind::BasisMismatch, "profiles were fitted on a different quadrature grid");
  }
  // Corrected trapezoid on f = d^2 with f' = 2 d d'.
  const double h = basis.step;
  double total = 0.0;
  double d0 = a.fitted(0) - b.fitted(0);
  double s0 = a.slope(0) - b.slope(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d1 = a.fitted(i) - b.fitted(i);
    const double s1 = a.slope(i) - b.slope(i);
    total += 0.5 * h * (d0 * d0 + d1 * d1) + (h * h / 12.0) * (2.0 * d0 * s0 - 2.0 * d1 * s1);
    d0 = d1;
    s0 = s1;
  }
  return std::max(total, 0.0);
}

LagSpec LagSpec::standard(double cell_size, double max_distance) {
  if (!(cell_size > 0.0)) throw Error(ErrorKind::BadConfig, "lag width must be positive");
  const int bins = static_cast<int>(std::floor(0.5 * max_distance / cell_size + 0.5));
  return LagSpec{cell_size, std::max(bins, 1)};
}

EmpiricalVariogram trace_variogram(const std::vector<SmoothedProfile>& profiles, const std::vector<Point2>& centroids,
                                   const BasisSystem& basis, const LagSpec& lags) {
  if (profiles.size() != centroids.size() || profiles.size() < 2) {
    throw Error(ErrorKind::BadConfig, "variogram needs matching profiles and centroids (at least two)");
  }
  if (!(lags.width > 0.0) || lags.bins < 1) throw Error(ErrorKind::BadConfig, "invalid lag specification");
  const int nb = lags.bins;
  std::vector<double> sum(nb, 0.0), dist(nb, 0.0);
  std::vector<long long> count(nb, 0);
  const std::size_t n = profiles.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double h = std::hypot(centroids[i].first - centroids[j].first, centroids[i].second - centroids[j].second);
      const double pos = h / lags.width;
      int b = static_cast<int>(std::ceil(pos - 0.5));  // pos in (b - 1/2, b + 1/2]
      if (b < 1 || b > nb) continue;
      sum[b - 1] += profile_l2_distance(profiles[i], profiles[j], basis);
      dist[b - 1] += h;
      ++count[b - 1];
    }
  }
  EmpiricalVariogram v;
  for (int b = 0; b < nb; ++b) {
    v.lag_centers.push_back((b + 1) * lags.width);
    v.pair_counts.push_back(count[b]);
    if (count[b] > 0) {
      v.semivariance.emplace_back(0.5 * sum[b] / static_cast<double>(count[b]));
      v.mean_distance.push_back(dist[b] / static_cast<double>(count[b]));
    } else {
      v.semivariance.emplace_back(std::nullopt);
      v.mean_distance.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return v;
}

}  // namespace bdz
