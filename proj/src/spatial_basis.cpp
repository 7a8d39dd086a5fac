#include "bdz/spatial_basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "bdz/error.hpp"

namespace bdz {

SiteSet::SiteSet(Mat coordinates) : coords_(std::move(coordinates)) {
  if (coords_.cols() != 2 || coords_.rows() < 4) {
    throw Error(ErrorKind::BadConfig, "site set needs an N x 2 coordinate matrix with N >= 4");
  }
  std::set<std::pair<double, double>> seen;
  for (Eigen::Index i = 0; i < coords_.rows(); ++i) {
    if (!seen.emplace(coords_(i, 0), coords_(i, 1)).second) {
      throw Error(ErrorKind::DuplicateSites, "duplicate site at row " + std::to_string(i));
    }
  }
  Eigen::ColPivHouseholderQR<Mat> qr(design());
  if (qr.rank() < 3) throw Error(ErrorKind::BadConfig, "sites are collinear; affine design is rank deficient");
}

SiteSet SiteSet::from_grid(const GridSpec& spec) {
  spec.validate();
  Mat c(spec.cells(), 2);
  for (int i = 0; i < spec.cells(); ++i) {
    const auto [x, y] = spec.centroid(i);
    c(i, 0) = x;
    c(i, 1) = y;
  }
  return SiteSet(std::move(c));
}

Mat SiteSet::design() const {
  Mat u(coords_.rows(), 3);
  u.col(0).setOnes();
  u.rightCols(2) = coords_;
  return u;
}

double tps_kernel(double h) {
  if (h <= 0.0) return 0.0;
  return h * h * std::log(h) / (8.0 * std::numbers::pi);
}

Mat tps_variogram_matrix(const SiteSet& sites) {
  const Mat& c = sites.coordinates();
  const Eigen::Index n = c.rows();
  Mat v = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      v(i, j) = v(j, i) = tps_kernel((c.row(i) - c.row(j)).norm());
    }
  }
  return v;
}

Mat bending_energy(const Mat& V, const Mat& U, const BendingEnergyOptions& options) {
  const Eigen::Index n = V.rows();
  if (V.cols() != n || U.rows() != n || U.cols() >= n) {
    throw Error(ErrorKind::BadConfig, "bending energy: dimension mismatch");
  }
  const Eigen::Index k = U.cols();
  Eigen::HouseholderQR<Mat> qr(U);
  const Mat Q = qr.householderQ() * Mat::Identity(n, n);
  const Mat Z = Q.rightCols(n - k);
  const Mat M = Z.transpose() * V * Z;

  double eps = 0.0;
  while (true) {
    Mat Me = M;
    Me.diagonal().array() += eps;
    Eigen::LDLT<Mat> ldlt(Me);
    if (ldlt.info() == Eigen::Success && ldlt.rcond() > 1e-14) {
      Mat inv = ldlt.solve(Mat::Identity(n - k, n - k));
      Mat B = Z * inv * Z.transpose();
      return 0.5 * (B + B.transpose());
    }
    eps = eps == 0.0 ? options.ridge_start : eps * 10.0;
    if (eps > options.ridge_max * (1.0 + 1e-9)) {
      throw Error(ErrorKind::SingularV, "variogram matrix is singular even after ridge stabilization");
    }
  }
}

double explained_variability(const Vec& g, int L) {
  const Eigen::Index n = g.size();
  if (L < 0 || L > n) throw Error(ErrorKind::BadConfig, "L outside [0, N]");
  double part = 0.0, total = 0.0;
  for (Eigen::Index l = 3; l < n; ++l) {
    const double inv = 1.0 / std::abs(g(l));
    total += inv;
    if (l < L) part += inv;
  }
  return total > 0.0 ? part / total : 1.0;
}

namespace {

void fix_sign(Eigen::Ref<Vec> v) {
  const double s = v.sum();
  if (std::abs(s) > 1e-10) {
    if (s < 0.0) v = -v;
    return;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

struct Spectrum {
  Mat vectors;  // ordered by |eigenvalue| ascending, first three replaced
  Vec values;
};

Spectrum ordered_spectrum(const Mat& B, const Mat& U) {
  const Eigen::Index n = B.rows();
  if (B.cols() != n || U.rows() != n || U.cols() != 3) {
    throw Error(ErrorKind::BadConfig, "kl_basis: dimension mismatch");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(B);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigen-decomposition of B failed");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(es.eigenvalues()(a)) < std::abs(es.eigenvalues()(b));
  });
  Spectrum s;
  s.vectors.resize(n, n);
  s.values.resize(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    s.values(l) = es.eigenvalues()(order[l]);
    s.vectors.col(l) = es.eigenvectors().col(order[l]);
  }
  // Gram-Schmidt on (1, x, y) in that order, so psi_1 is constant and
  // psi_2, psi_3 are the x and y trends.
  for (int c = 0; c < 3; ++c) {
    Vec v = U.col(c);
    for (int d = 0; d < c; ++d) v -= s.vectors.col(d).dot(v) * s.vectors.col(d);
    for (int d = 0; d < c; ++d) v -= s.vectors.col(d).dot(v) * s.vectors.col(d);
    v.normalize();
    s.vectors.col(c) = v;
  }
  for (Eigen::Index l = 0; l < n; ++l) fix_sign(s.vectors.col(l));
  return s;
}

SpatialBasis truncate(const Spectrum& s, int L) {
  SpatialBasis out;
  out.L = L;
  out.psi = s.vectors.leftCols(L);
  out.eigenvalues = s.values;
  out.explained_fraction = explained_variability(s.values, L);
  return out;
}

}  // namespace

SpatialBasis kl_basis(const Mat& B, const Mat& U, int L) {
  if (L < 1 || L > B.rows()) throw Error(ErrorKind::BadConfig, "L must lie in [1, N]");
  return truncate(ordered_spectrum(B, U), L);
}

SpatialBasis kl_basis_for_fraction(const Mat& B, const Mat& U, double target) {
  if (!(target >= 0.0 && target <= 1.0)) throw Error(ErrorKind::BadConfig, "explained fraction must be in [0, 1]");
  const Spectrum s = ordered_spectrum(B, U);
  const int n = static_cast<int>(B.rows());
  for (int L = 3; L <= n; ++L) {
    if (explained_variability(s.values, L) >= target - 1e-15) return truncate(s, L);
  }
  return truncate(s, n);
}

SpatialBasis grid_spatial_basis(const GridSpec& spec, int L) {
  const SiteSet sites = SiteSet::from_grid(spec);
  const Mat U = sites.design();
  return kl_basis(bending_energy(tps_variogram_matrix(sites), U), U, L);
}

}  // namespace bdz
