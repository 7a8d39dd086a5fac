#include <gtest/gtest.h>

#include <cmath>

#include "bdz/rng.hpp"
#include "bdz/selection.hpp"
#include "bdz/spatial_basis.hpp"
#include "bdz/synth.hpp"

using namespace bdz;

namespace {

FittedModel dense_model(int K, int p, int L, double mean_value = 1.0) {
  std::vector<Vec> mu(K, Vec::Constant(p, mean_value));
  Mat W = Mat::Constant(p, p, 0.1);
  W.diagonal().setConstant(2.0);
  std::vector<Mat> precisions(K, W);
  FittedModel m;
  m.params = ModelParams(mu, precisions, Mat::Zero(K - 1, L));
  return m;
}

}  // namespace

TEST(Complexity, DirectCounts) {
  EXPECT_EQ(complexity(dense_model(1, 3, 16), 16), 3 + 6 + 0);
  EXPECT_EQ(complexity(dense_model(4, 17, 16), 16), 68 + 612 + 48);
  EXPECT_EQ(complexity(dense_model(2, 3, 5, 0.0), 5), 0 + 12 + 5);
}

TEST(Complexity, DiagonalPrecisionCountsDiagonalOnly) {
  FittedModel m;
  m.params = ModelParams({Vec::Ones(4)}, {Mat::Identity(4, 4)}, Mat::Zero(0, 3));
  EXPECT_EQ(complexity(m, 3), 4 + 4);
}

TEST(Bic, Formula) {
  auto m = dense_model(1, 3, 16);
  m.loglik = -100.0;
  EXPECT_NEAR(bic(m, 16, 50), -100.0 - 4.5 * std::log(50.0), 1e-12);
  EXPECT_NEAR(bic(m, 16, 1), -100.0, 1e-12);
  auto zero = dense_model(1, 3, 16, 0.0);
  zero.loglik = -100.0;
  // Three means shrunk to zero: three fewer parameters.
  EXPECT_NEAR(bic(zero, 16, 50) - bic(m, 16, 50), 1.5 * std::log(50.0), 1e-10);
  auto two_fewer = m;
  two_fewer.params.mu[0](0) = 0.0;
  two_fewer.params.mu[0](1) = 0.0;
  EXPECT_NEAR(bic(two_fewer, 16, 50) - bic(m, 16, 50), std::log(50.0), 1e-10);
}

TEST(Icl, OneHotEqualsBic) {
  auto m = dense_model(2, 2, 3);
  m.loglik = -40;
  m.tau = Mat::Zero(10, 2);
  for (int i = 0; i < 10; ++i) m.tau(i, i % 2) = 1.0;
  EXPECT_EQ(icl(m, 3, 10), bic(m, 3, 10));
  EXPECT_EQ(posterior_entropy_term(m.tau), 0.0);
}

TEST(Icl, UniformPosteriors) {
  auto m = dense_model(3, 2, 3);
  m.loglik = -40;
  m.tau = Mat::Constant(12, 3, 1.0 / 3);
  EXPECT_NEAR(icl(m, 3, 12), bic(m, 3, 12) - 12 * std::log(3.0), 1e-10);
}

TEST(Icl, NeverAboveBic) {
  CounterRng rng(3);
  for (int t = 0; t < 50; ++t) {
    auto m = dense_model(3, 2, 3);
    m.loglik = -10 * rng.uniform();
    m.tau.resize(20, 3);
    for (int i = 0; i < 20; ++i) {
      Vec r(3);
      for (int k = 0; k < 3; ++k) r(k) = std::pow(rng.uniform(), 4);
      m.tau.row(i) = r / r.sum();
    }
    auto rec = score(m, 3, 20);
    EXPECT_LE(rec.icl, rec.bic);
    EXPECT_LE(rec.entropy_term, 0.0);
  }
}

TEST(GridSearch, SingleTriplet) {
  CounterRng rng(4);
  Mat X(30, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() + (i % 2) * 5;
  SearchGrid g{{2}, {0.1}, {0.1}};
  FitConfig cfg;
  cfg.n_init = 1;
  auto r = grid_search(X, Mat::Ones(30, 1) / std::sqrt(30.0), g, cfg);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_TRUE(r.table[0].ok);
  EXPECT_EQ(r.best_bic, 0u);
}

TEST(GridSearch, OrderDeterministicAndFailuresRecorded) {
  auto s = SyntheticScenario::standard(2);
  const auto truth = simulate_labels(s).labels;
  const Mat betas = simulate_coefficients(truth, s);
  const Mat psi = grid_spatial_basis(s.spec, 16).psi;
  SearchGrid g{{2, 3, 4, 5}, {0.1, 1.0}, {1.0, 10.0}};
  FitConfig cfg;
  cfg.n_init = 3;
  cfg.seed = 2;
  auto a = grid_search(betas, psi, g, cfg);
  ASSERT_EQ(a.table.size(), 16u);
  std::size_t i = 0;
  for (int K : g.K)
    for (double l1 : g.lambda1)
      for (double l2 : g.lambda2) {
        EXPECT_EQ(a.table[i].K, K);
        EXPECT_EQ(a.table[i].lambda1, l1);
        EXPECT_EQ(a.table[i].lambda2, l2);
        if (!a.table[i].ok) EXPECT_FALSE(a.table[i].error.empty());
        ++i;
      }
  ASSERT_TRUE(a.best_bic);
  EXPECT_EQ(a.table[*a.best_bic].K, 3);
  for (std::size_t r = 1; r < a.rank_bic.size(); ++r) {
    EXPECT_GE(a.table[a.rank_bic[r - 1]].bic, a.table[a.rank_bic[r]].bic);
  }
  cfg.threads = 4;
  auto b = grid_search(betas, psi, g, cfg);
  for (std::size_t k = 0; k < a.table.size(); ++k) {
    EXPECT_EQ(a.table[k].ok, b.table[k].ok);
    if (a.table[k].ok) EXPECT_EQ(a.table[k].bic, b.table[k].bic);
  }
}

TEST(SearchGrid, LogSpaced) {
  auto v = SearchGrid::log_spaced(1e-3, 10.0, 5);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_NEAR(v[0], 1e-3, 1e-15);
  EXPECT_NEAR(v[4], 10.0, 1e-12);
  EXPECT_NEAR(v[2], 0.1, 1e-12);
}
