#pragma once

#include <vector>

#include "bdz/census.hpp"
#include "bdz/types.hpp"

namespace bdz {

/// Cell centroids (N x 2, meters) and the affine design U with rows (1, x, y).
class SiteSet {
 public:
  /// Throws DuplicateSites on repeated coordinates and BadConfig when U is
  /// rank deficient (collinear sites).
  explicit SiteSet(Mat coordinates);
  static SiteSet from_grid(const GridSpec& spec);

  const Mat& coordinates() const { return coords_; }
  Mat design() const;
  Eigen::Index size() const { return coords_.rows(); }

 private:
  Mat coords_;
};

/// Thin-plate generalized variogram h^2 log(h) / (8 pi), zero at h = 0.
double tps_kernel(double h);
Mat tps_variogram_matrix(const SiteSet& sites);

struct BendingEnergyOptions {
  double ridge_start = 1e-10;
  double ridge_max = 1e-6;
};

/// B = V^-1 - V^-1 U (U' V^-1 U)^-1 U' V^-1, evaluated in the equivalent
/// projected form Z (Z' V Z)^-1 Z' with Z an orthonormal basis of the
/// complement of span(U). The projection makes B U = 0 hold to rounding.
/// When Z' V Z is numerically singular a ridge eps I (eps from ridge_start,
/// x10 up to ridge_max) is added to V; SingularV if that fails too.
Mat bending_energy(const Mat& V, const Mat& U, const BendingEnergyOptions& options = {});

struct SpatialBasis {
  Mat psi;          // N x L, orthonormal columns
  Vec eigenvalues;  // all N eigenvalues of B, ascending by magnitude
  int L = 0;
  double explained_fraction = 0.0;
};

/// Sum_{l=4..L} 1/g_l over Sum_{l=4..N} 1/g_l; the three affine directions
/// are always included and contribute nothing.
double explained_variability(const Vec& eigenvalues, int L);

/// Spectral basis of B, smoothest first. The three null directions are the
/// orthonormalized columns of U (constant, x trend, y trend); throws
/// EigenFailure if the solver fails.
SpatialBasis kl_basis(const Mat& B, const Mat& U, int L);

/// Smallest L >= 3 whose explained fraction reaches `target`.
SpatialBasis kl_basis_for_fraction(const Mat& B, const Mat& U, double target);

/// Convenience: variogram, bending energy and truncated basis for a grid.
SpatialBasis grid_spatial_basis(const GridSpec& spec, int L);

}  // namespace bdz
