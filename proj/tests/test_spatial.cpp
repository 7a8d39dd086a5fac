#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bdz/census.hpp"
#include "bdz/error.hpp"
#include "bdz/pipeline.hpp"
#include "bdz/rng.hpp"
#include "bdz/spatial_basis.hpp"
#include "bdz/variogram.hpp"

using namespace bdz;

namespace {

const BasisSystem& standard_basis() {
  static const BasisSystem b = build_basis(15, 5.0, 3, 501);
  return b;
}

SmoothedProfile fitted(std::vector<double> p) {
  return fit_profile(profile_points(RelativeAbundance(std::move(p)), QGrid::uniform()), standard_basis());
}

// B from the textbook formula with explicit inverses.
Mat literal_bending_energy(const Mat& V, const Mat& U) {
  const Mat Vi = V.inverse();
  return Vi - Vi * U * (U.transpose() * Vi * U).inverse() * U.transpose() * Vi;
}

double r_squared(const Vec& y, const Mat& X) {
  Mat D(X.rows(), X.cols() + 1);
  D << Vec::Ones(X.rows()), X;
  const Vec fit = D * D.colPivHouseholderQr().solve(y);
  const double ss = (y.array() - y.mean()).square().sum();
  return 1.0 - (y - fit).squaredNorm() / ss;
}

}  // namespace

TEST(Distances, Basic) {
  auto d = pairwise_distances({{0, 0}, {20, 0}});
  EXPECT_DOUBLE_EQ(d(0, 1), 20.0);
  auto sq = pairwise_distances({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  EXPECT_DOUBLE_EQ(sq(0, 3), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(sq(1, 2), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(sq(2, 2), 0.0);
}

TEST(Distances, MatchesDoubleLoop) {
  CounterRng rng(2);
  std::vector<Point2> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({100 * rng.uniform(), 100 * rng.uniform()});
  auto d = pairwise_distances(pts);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      EXPECT_NEAR(d(i, j), std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second), 1e-12);
    }
  }
}

TEST(L2Distance, IdenticalAndShifted) {
  auto a = fitted({0.5, 0.5});
  auto b = fitted({0.25, 0.25, 0.25, 0.25});
  EXPECT_DOUBLE_EQ(profile_l2_distance(a, a, standard_basis()), 0.0);
  // Constant curves 2 and 4 differ by c = 2 on [0, 5].
  EXPECT_NEAR(profile_l2_distance(a, b, standard_basis()), 5.0 * 4.0, 1e-10);
}

TEST(L2Distance, MatchesFineGridOracle) {
  auto a = fitted({0.8, 0.1, 0.1});
  auto b = fitted({0.5, 0.3, 0.1, 0.1});
  // Composite Simpson on 20001 points of the evaluated curves.
  const int n = 20000;
  const double h = 5.0 / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double q = i * h;
    const double d = evaluate_profile(a.coefficients, standard_basis(), q) -
                     evaluate_profile(b.coefficients, standard_basis(), q);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * d * d;
  }
  s *= h / 3.0;
  EXPECT_NEAR(profile_l2_distance(a, b, standard_basis()), s, 1e-8);
}

TEST(L2Distance, DifferentGridsThrow) {
  auto a = fitted({0.5, 0.5});
  const auto other = build_basis(15, 5.0, 3, 401);
  auto b = fit_profile(profile_points(RelativeAbundance({0.5, 0.5}), QGrid::uniform()), other);
  try {
    profile_l2_distance(a, b, standard_basis());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BasisMismatch);
  }
}

TEST(Variogram, IdenticalProfilesGiveZero) {
  std::vector<SmoothedProfile> ps(6, fitted({0.7, 0.2, 0.1}));
  std::vector<Point2> c{{10, 10}, {30, 10}, {50, 10}, {10, 30}, {30, 30}, {50, 30}};
  auto v = trace_variogram(ps, c, standard_basis(), LagSpec{20.0, 2});
  for (const auto& g : v.semivariance) {
    ASSERT_TRUE(g);
    EXPECT_NEAR(*g, 0.0, 1e-14);
  }
}

TEST(Variogram, SinglePairIsHalfDistance) {
  std::vector<SmoothedProfile> ps{fitted({0.8, 0.1, 0.1}), fitted({0.6, 0.4})};
  const double d = profile_l2_distance(ps[0], ps[1], standard_basis());
  auto v = trace_variogram(ps, {{10, 10}, {30, 10}}, standard_basis(), LagSpec{20.0, 1});
  ASSERT_EQ(v.semivariance.size(), 1u);
  EXPECT_EQ(v.pair_counts[0], 1);
  EXPECT_NEAR(*v.semivariance[0], d / 2, 1e-14);
}

TEST(Variogram, EmptyBinUnset) {
  std::vector<SmoothedProfile> ps{fitted({0.8, 0.2}), fitted({0.6, 0.4})};
  auto v = trace_variogram(ps, {{0, 0}, {20, 0}}, standard_basis(), LagSpec{20.0, 3});
  EXPECT_TRUE(v.semivariance[0]);
  EXPECT_FALSE(v.semivariance[1]);
  EXPECT_EQ(v.pair_counts[2], 0);
}

TEST(Variogram, SmoothFieldIncreasesWithLag) {
  // Evenness drifts smoothly across the grid.
  GridSpec g{0, 0, 20, 8, 8};
  std::vector<SmoothedProfile> ps;
  std::vector<int> ids;
  for (int c = 0; c < g.cells(); ++c) {
    const double a = 0.5 + 0.4 * (g.x_index(c) + g.y_index(c)) / 14.0;
    ps.push_back(fitted({a, (1 - a) * 0.6, (1 - a) * 0.4}));
    ids.push_back(c);
  }
  auto v = trace_variogram(ps, centroids(g, ids), standard_basis(), LagSpec{20.0, 5});
  for (std::size_t b = 1; b < v.semivariance.size(); ++b) EXPECT_GT(*v.semivariance[b], *v.semivariance[b - 1]);
}

TEST(Tps, KernelValues) {
  EXPECT_EQ(tps_kernel(0.0), 0.0);
  EXPECT_EQ(tps_kernel(1.0), 0.0);
  EXPECT_NEAR(tps_kernel(2.0), 4.0 * std::log(2.0) / (8.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(tps_kernel(2.0), 0.110318, 1e-6);
}

TEST(Sites, RejectsDuplicatesAndCollinear) {
  Mat dup(4, 2);
  dup << 0, 0, 1, 0, 0, 1, 0, 0;
  try {
    SiteSet s(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateSites);
  }
  Mat line(4, 2);
  line << 0, 0, 1, 1, 2, 2, 3, 3;
  EXPECT_THROW(SiteSet{line}, Error);
}

TEST(BendingEnergy, MatchesLiteralFormula) {
  CounterRng rng(9);
  Mat c(12, 2);
  for (int i = 0; i < 12; ++i) c.row(i) << 10 * rng.uniform(), 10 * rng.uniform();
  SiteSet s(c);
  const Mat V = tps_variogram_matrix(s);
  const Mat U = s.design();
  const Mat B = bending_energy(V, U);
  const Mat oracle = literal_bending_energy(V, U);
  EXPECT_LT((B - oracle).cwiseAbs().maxCoeff(), 1e-8 * oracle.cwiseAbs().maxCoeff());
}

TEST(BendingEnergy, UnitSquareRankOne) {
  Mat c(4, 2);
  c << 0, 0, 1, 0, 0, 1, 1, 1;
  SiteSet s(c);
  const Mat B = bending_energy(tps_variogram_matrix(s), s.design());
  EXPECT_LT((B - B.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Mat> es(B);
  int nonzero = 0;
  for (int i = 0; i < 4; ++i) nonzero += std::abs(es.eigenvalues()(i)) > 1e-8 * B.cwiseAbs().maxCoeff();
  EXPECT_EQ(nonzero, 1);
}

TEST(BendingEnergy, GridProperties) {
  GridSpec g{0, 0, 20, 10, 14};
  SiteSet s = SiteSet::from_grid(g);
  const Mat U = s.design();
  const Mat B = bending_energy(tps_variogram_matrix(s), U);
  EXPECT_LT((B * U).cwiseAbs().maxCoeff(), 1e-8 * B.cwiseAbs().maxCoeff());
  auto sb = kl_basis(B, U, 16);
  int small = 0;
  for (Eigen::Index i = 0; i < sb.eigenvalues.size(); ++i) small += std::abs(sb.eigenvalues(i)) < 1e-8;
  EXPECT_EQ(small, 3);
  const Vec psi1 = sb.psi.col(0);
  EXPECT_LT(psi1.maxCoeff() - psi1.minCoeff(), 1e-10);
  EXPECT_GT(r_squared(sb.psi.col(1), s.coordinates()), 1 - 1e-8);
  EXPECT_GT(r_squared(sb.psi.col(2), s.coordinates()), 1 - 1e-8);
  EXPECT_LT((sb.psi.transpose() * sb.psi - Mat::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Explained, Bounds) {
  GridSpec g{0, 0, 20, 6, 7};
  auto sb = grid_spatial_basis(g, 10);
  const int N = g.cells();
  EXPECT_NEAR(explained_variability(sb.eigenvalues, N), 1.0, 1e-15);
  EXPECT_EQ(explained_variability(sb.eigenvalues, 3), 0.0);
  double prev = 0.0;
  for (int L = 3; L <= N; ++L) {
    const double e = explained_variability(sb.eigenvalues, L);
    EXPECT_GE(e, prev);
    prev = e;
  }
  auto chosen = kl_basis_for_fraction(
      bending_energy(tps_variogram_matrix(SiteSet::from_grid(g)), SiteSet::from_grid(g).design()),
      SiteSet::from_grid(g).design(), 0.9);
  EXPECT_GE(chosen.explained_fraction, 0.9);
  EXPECT_LT(explained_variability(sb.eigenvalues, chosen.L - 1), 0.9);
}

TEST(Explained, BadLThrows) {
  Vec g = Vec::LinSpaced(5, 0, 4);
  EXPECT_THROW(explained_variability(g, 6), Error);
}
