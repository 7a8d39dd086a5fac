#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bdz/error.hpp"
#include "bdz/glasso.hpp"
#include "bdz/mlogit.hpp"
#include "bdz/pfc.hpp"
#include "bdz/rng.hpp"
#include "bdz/spatial_basis.hpp"
#include "bdz/synth.hpp"

using namespace bdz;

namespace {

// Density from the covariance, computed independently of the precision path.
double covariance_form_density(const Vec& x, const Vec& mu, const Mat& sigma) {
  const double p = static_cast<double>(x.size());
  const Vec d = x - mu;
  return -0.5 * p * std::log(2 * std::numbers::pi) - 0.5 * std::log(sigma.determinant()) -
         0.5 * d.dot(sigma.fullPivLu().solve(d));
}

Mat random_spd(CounterRng& rng, int p) {
  Mat A(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = rng.normal();
  return A * A.transpose() + p * Mat::Identity(p, p);
}

Mat gaussian_matrix(CounterRng& rng, int n, int p) {
  Mat X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

double soft(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

const Mat& small_psi() {
  static const Mat psi = grid_spatial_basis(GridSpec{0, 0, 20, 6, 8}, 6).psi;
  return psi;
}

}  // namespace

TEST(Mixing, Proportions) {
  Vec psi_row = Vec::Constant(3, 0.7);
  Vec u = mixing_proportions(Mat::Zero(2, 3), psi_row);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(u(k), 1.0 / 3, 1e-15);

  Mat omega = Mat::Zero(1, 1);
  omega(0, 0) = std::log(3.0);
  Vec v = mixing_proportions(omega, Vec::Ones(1));
  EXPECT_NEAR(v(0), 0.75, 1e-15);
  EXPECT_NEAR(v(1), 0.25, 1e-15);

  omega(0, 0) = 50.0;
  Vec w = mixing_proportions(omega, Vec::Ones(1));
  EXPECT_NEAR(w(0), 1.0, 1e-10);
  EXPECT_TRUE(std::isfinite(w(1)));
}

TEST(Density, StandardNormal) {
  EXPECT_NEAR(log_density(Vec::Zero(1), Vec::Zero(1), Mat::Identity(1, 1), 0.0), -0.9189385332, 1e-9);
}

TEST(Density, MatchesCovarianceForm) {
  CounterRng rng(4);
  for (int t = 0; t < 20; ++t) {
    const int p = 1 + static_cast<int>(rng.below(6));
    const Mat S = random_spd(rng, p);
    const Mat W = S.inverse();
    const double logdet = std::log(W.determinant());
    Vec x(p), mu(p);
    for (int j = 0; j < p; ++j) {
      x(j) = rng.normal();
      mu(j) = rng.normal();
    }
    EXPECT_NEAR(log_density(x, mu, W, logdet), covariance_form_density(x, mu, S), 1e-10);
    EXPECT_NEAR(log_density(x, mu, W, logdet), log_density(Vec(x - mu), Vec::Zero(p), W, logdet), 1e-12);
  }
}

TEST(ModelParams, RejectsNonPD) {
  ModelParams m({Vec::Zero(2)}, {Mat::Identity(2, 2)}, Mat::Zero(0, 3));
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1;
  try {
    m.set_precision(0, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPD);
  }
}

TEST(EStep, IdenticalComponentsGivePriors) {
  const Mat& psi = small_psi();
  CounterRng rng(5);
  Mat omega(2, psi.cols());
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = 0.5 * rng.normal();
  ModelParams m({Vec::Zero(3), Vec::Zero(3), Vec::Zero(3)}, {Mat::Identity(3, 3), Mat::Identity(3, 3), Mat::Identity(3, 3)},
                omega);
  const Mat betas = gaussian_matrix(rng, psi.rows(), 3);
  const Mat tau = e_step(m, betas, psi);
  const Mat prior = log_mixing_matrix(omega, psi).array().exp();
  EXPECT_LT((tau - prior).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((tau.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(EStep, SeparatedComponentsAreOneHot) {
  const Mat& psi = small_psi();
  const int n = static_cast<int>(psi.rows());
  Mat betas(n, 2);
  for (int i = 0; i < n; ++i) betas.row(i) << (i % 2 ? 50.0 : -50.0), 0.1 * (i % 5);
  ModelParams m({Vec::Constant(2, -50.0), Vec::Constant(2, 50.0)}, {Mat::Identity(2, 2), Mat::Identity(2, 2)},
                Mat::Zero(1, psi.cols()));
  m.mu[0](1) = 0;
  m.mu[1](1) = 0;
  const Mat tau = e_step(m, betas, psi);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(tau(i, i % 2 ? 1 : 0), 1.0, 1e-12);
}

TEST(MStepMeans, UnpenalizedIsWeightedMean) {
  CounterRng rng(6);
  const Mat betas = gaussian_matrix(rng, 40, 3);
  Mat tau(40, 2);
  for (int i = 0; i < 40; ++i) {
    tau(i, 0) = rng.uniform();
    tau(i, 1) = 1 - tau(i, 0);
  }
  const Mat W = random_spd(rng, 3);
  auto mu = m_step_means(tau, betas, {W, W}, 0.0, {Vec::Zero(3), Vec::Zero(3)});
  for (int k = 0; k < 2; ++k) {
    Vec oracle = Vec::Zero(3);
    for (int i = 0; i < 40; ++i) oracle += tau(i, k) * betas.row(i).transpose();
    oracle /= tau.col(k).sum();
    EXPECT_LT((mu[k] - oracle).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MStepMeans, HugePenaltyShrinksToZero) {
  CounterRng rng(7);
  const Mat betas = gaussian_matrix(rng, 30, 4).array() + 3.0;
  const Mat tau = Mat::Ones(30, 1);
  auto mu = m_step_means(tau, betas, {Mat::Identity(4, 4)}, 1e9, {Vec::Zero(4)});
  EXPECT_EQ(mu[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(MStepMeans, DiagonalPrecisionSoftThresholds) {
  CounterRng rng(8);
  const Mat betas = gaussian_matrix(rng, 30, 4) + Mat::Constant(30, 4, 0.2);
  const Mat tau = Mat::Ones(30, 1);
  Vec d(4);
  d << 1.0, 2.0, 0.5, 4.0;
  const double lambda1 = 3.0;
  auto mu = m_step_means(tau, betas, {Mat(d.asDiagonal())}, lambda1, {Vec::Zero(4)});
  const Vec mean = betas.colwise().mean();
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(mu[0](j), soft(mean(j), lambda1 / (30 * d(j))), 1e-12);
}

TEST(MStepMeans, EmptyClusterThrows) {
  const Mat betas = Mat::Zero(10, 3);
  Mat tau = Mat::Zero(10, 2);
  tau.col(0).setOnes();
  try {
    m_step_means(tau, betas, {Mat::Identity(3, 3), Mat::Identity(3, 3)}, 0.0, {Vec::Zero(3), Vec::Zero(3)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCluster);
  }
}

TEST(Glasso, UnpenalizedIsInverse) {
  CounterRng rng(9);
  const Mat S = random_spd(rng, 5) / 5.0;
  auto g = graphical_lasso(S, 0.0);
  EXPECT_LT((g.precision - S.inverse()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Glasso, ScalarClosedForm) {
  for (double s : {0.3, 1.0, 7.5}) {
    for (double lambda2 : {0.0, 0.5, 4.0}) {
      const double n = 20.0;
      Mat tau = Mat::Ones(2, 1) * (n / 2);
      Mat betas(2, 1);
      betas << std::sqrt(s), -std::sqrt(s);
      auto g = m_step_precision(tau, betas, 0, Vec::Zero(1), lambda2);
      EXPECT_NEAR(g.precision(0, 0), 1.0 / (s + 2 * lambda2 / n), 1e-8);
    }
  }
}

TEST(Glasso, LargePenaltyZeroesOffDiagonal) {
  CounterRng rng(10);
  const Mat S = random_spd(rng, 4) / 4.0;
  double max_off = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) max_off = std::max(max_off, std::abs(S(i, j)));
  auto g = graphical_lasso(S, max_off * 1.01);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) EXPECT_EQ(g.precision(i, j), 0.0);
    }
    EXPECT_NEAR(g.precision(i, i), 1.0 / (S(i, i) + max_off * 1.01), 1e-10);
  }
}

TEST(Glasso, SubgradientOptimality) {
  CounterRng rng(12);
  const Mat S = random_spd(rng, 6) / 6.0;
  const double rho = 0.1;
  auto g = graphical_lasso(S, rho);
  ASSERT_TRUE(g.converged);
  const Mat grad = g.precision.inverse() - S;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double w = g.precision(i, j);
      if (w != 0.0) {
        EXPECT_NEAR(grad(i, j), rho * (w > 0 ? 1 : -1), 1e-5);
      } else {
        EXPECT_LE(std::abs(grad(i, j)), rho + 1e-5);
      }
    }
  }
}

TEST(MStepMixing, UniformPosteriorsGiveZero) {
  const Mat& psi = small_psi();
  const Mat tau = Mat::Constant(psi.rows(), 3, 1.0 / 3);
  const Mat omega = m_step_mixing(tau, psi, Mat::Zero(2, psi.cols()));
  EXPECT_LT(omega.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MStepMixing, ConstantBasisGivesLogit) {
  const int n = 50;
  const double a = 1.0 / std::sqrt(n);
  const Mat psi = Mat::Constant(n, 1, a);
  const double c = 0.7;
  Mat tau(n, 2);
  tau.col(0).setConstant(c);
  tau.col(1).setConstant(1 - c);
  const Mat omega = m_step_mixing(tau, psi, Mat::Zero(1, 1));
  EXPECT_NEAR(omega(0, 0) * a, std::log(c / (1 - c)), 1e-8);
}

TEST(MStepMixing, ScoreEquationWithConstantBasis) {
  const Mat& psi = small_psi();
  CounterRng rng(14);
  Mat tau(psi.rows(), 3);
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    Vec r(3);
    for (int k = 0; k < 3; ++k) r(k) = rng.uniform() + 0.1 * (k + 1) * (i % 4);
    tau.row(i) = r / r.sum();
  }
  const Mat omega = m_step_mixing(tau, psi, Mat::Zero(2, psi.cols()));
  const Mat pi = log_mixing_matrix(omega, psi).array().exp();
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(pi.col(k).mean(), tau.col(k).mean(), 1e-6);
}

TEST(Mlogit, ObjectiveNeverDecreases) {
  const Mat& psi = small_psi();
  CounterRng rng(15);
  Mat w(psi.rows(), 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform();
  MlogitOptions opts;
  opts.max_iter = 1;
  Mat omega = Mat::Zero(2, psi.cols());
  double prev = mlogit_objective(w, psi, omega);
  for (int it = 0; it < 10; ++it) {
    auto r = fit_weighted_mlogit(w, psi, omega, opts);
    EXPECT_GE(r.objective, prev - 1e-12);
    prev = r.objective;
    omega = r.omega;
  }
}

TEST(Loglik, SingleClusterSaturated) {
  CounterRng rng(16);
  const int n = 60, p = 3;
  const Mat X = gaussian_matrix(rng, n, p) * random_spd(rng, p);
  const Vec mean = X.colwise().mean();
  const Mat C = X.rowwise() - mean.transpose();
  const Mat S = C.transpose() * C / n;
  ModelParams m({mean}, {S.inverse()}, Mat::Zero(0, 4));
  const Mat psi = Mat::Ones(n, 4);
  const double oracle = -0.5 * n * (p * std::log(2 * std::numbers::pi) + std::log(S.determinant()) + p);
  EXPECT_NEAR(loglik(m, X, psi), oracle, 1e-8 * std::abs(oracle));

  ModelParams zero({Vec::Zero(p)}, {S.inverse()}, Mat::Zero(0, 4));
  EXPECT_NEAR(penalized_loglik(zero, X, psi, 5.0, 0.0), loglik(zero, X, psi), 1e-10);
}

TEST(Init, SingleClusterIsGlobalMean) {
  CounterRng rng(18);
  const Mat X = gaussian_matrix(rng, 30, 4);
  auto m = init_model(X, 1, Mat::Ones(30, 2), 3);
  EXPECT_LT((m.mu[0] - Vec(X.colwise().mean())).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(init_model(X, 0, Mat::Ones(30, 2), 3), Error);
  EXPECT_THROW(init_model(X, 31, Mat::Ones(30, 2), 3), Error);
}

TEST(Init, DeterministicAndAccurate) {
  auto s = SyntheticScenario::standard(3);
  const auto truth = simulate_labels(s).labels;
  const Mat betas = simulate_coefficients(truth, s);
  const Mat psi = grid_spatial_basis(s.spec, 16).psi;
  auto a = init_model(betas, 3, psi, 42);
  auto b = init_model(betas, 3, psi, 42);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(a.mu[k], b.mu[k]);
  const auto labels = kmeans(betas, 3, 42, 10);
  EXPECT_GT(adjusted_rand_index(labels, truth), 0.8);
}

TEST(Em, SingleClusterConvergesFast) {
  CounterRng rng(19);
  const Mat X = gaussian_matrix(rng, 50, 3);
  FitConfig cfg;
  cfg.lambda1 = 0;
  cfg.lambda2 = 0;
  cfg.n_init = 1;
  auto fit = fit_em(X, Mat::Ones(50, 2), 1, cfg);
  EXPECT_LE(fit.iterations, 3);
  EXPECT_TRUE(fit.converged);
  EXPECT_LT((fit.params.mu[0] - Vec(X.colwise().mean())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Em, RecoversBlockedClusters) {
  auto s = SyntheticScenario::standard(4);
  const auto truth = simulate_labels(s).labels;
  const Mat betas = simulate_coefficients(truth, s);
  const Mat psi = grid_spatial_basis(s.spec, 16).psi;
  FitConfig cfg;
  cfg.n_init = 2;
  cfg.seed = 4;
  auto fit = fit_em(betas, psi, 3, cfg);
  EXPECT_GE(adjusted_rand_index(fit.labels, truth), 0.9);
}

TEST(Em, ReseedsAStrandedCluster) {
  const Mat& psi = small_psi();
  CounterRng rng(23);
  Mat X = gaussian_matrix(rng, psi.rows(), 3);
  for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, 0) += 6.0 * (i % 2);
  ModelParams start({Vec(X.colwise().mean()), Vec::Constant(3, 500.0)},
                    {Mat::Identity(3, 3), Mat::Identity(3, 3)}, Mat::Zero(1, psi.cols()));
  FitConfig cfg;
  cfg.lambda1 = 0;
  cfg.lambda2 = 0.1;
  auto fit = run_em(X, psi, start, cfg);
  ASSERT_FALSE(fit.reseed_iterations.empty());
  EXPECT_EQ(fit.reseed_iterations.front(), 1);
  for (int k = 0; k < 2; ++k) EXPECT_GE(fit.tau.col(k).sum(), 4.0);
}

// Ascent, normalization and positive definiteness on randomized problems.
TEST(EmProperties, MonotoneNormalizedPositiveDefinite) {
  const Mat& psi = small_psi();
  for (int run = 0; run < 8; ++run) {
    CounterRng rng(100 + run);
    Mat X = gaussian_matrix(rng, psi.rows(), 3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, 0) += 4.0 * (i % 2);
    FitConfig cfg;
    cfg.n_init = 1;
    cfg.seed = run;
    cfg.lambda1 = 0.05 * run;
    cfg.lambda2 = 0.1 + 0.1 * run;
    cfg.max_iter = 60;
    bool pd = true, normalized = true;
    cfg.observer = [&](int, const ModelParams& m, const Mat& tau) {
      for (int k = 0; k < m.K(); ++k) pd = pd && Eigen::LLT<Mat>(m.precision(k)).info() == Eigen::Success;
      normalized = normalized && (tau.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12;
    };
    auto fit = fit_em(X, psi, 2, cfg);
    EXPECT_TRUE(pd);
    EXPECT_TRUE(normalized);
    for (std::size_t t = 1; t < fit.objective_trace.size(); ++t) {
      if (std::find(fit.reseed_iterations.begin(), fit.reseed_iterations.end(), static_cast<int>(t)) !=
          fit.reseed_iterations.end())
        continue;
      EXPECT_GE(fit.objective_trace[t], fit.objective_trace[t - 1] - 1e-6) << "run " << run << " it " << t;
    }
  }
}

TEST(Em, SameSeedSameFit) {
  const Mat& psi = small_psi();
  CounterRng rng(21);
  Mat X = gaussian_matrix(rng, psi.rows(), 3);
  FitConfig cfg;
  cfg.n_init = 3;
  cfg.threads = 3;
  auto a = fit_em(X, psi, 2, cfg);
  cfg.threads = 1;
  auto b = fit_em(X, psi, 2, cfg);
  EXPECT_EQ(a.objective_trace, b.objective_trace);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(HardAssignment, TiesAndOracle) {
  Mat tau(3, 2);
  tau << 1, 0, 0, 1, 0.5, 0.5;
  EXPECT_EQ(hard_assignment(tau), (std::vector<int>{0, 1, 0}));
  CounterRng rng(22);
  Mat r(50, 4);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
  auto labels = hard_assignment(r);
  for (int i = 0; i < 50; ++i) {
    int best = 0;
    for (int k = 1; k < 4; ++k)
      if (r(i, k) > r(i, best)) best = k;
    EXPECT_EQ(labels[i], best);
  }
}

TEST(ModelParams, PermutationPreservesDensity) {
  const Mat& psi = small_psi();
  CounterRng rng(23);
  Mat omega(2, psi.cols());
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = rng.normal();
  ModelParams m({Vec::Constant(2, -1), Vec::Zero(2), Vec::Constant(2, 1)},
                {Mat::Identity(2, 2), 2 * Mat::Identity(2, 2), 0.5 * Mat::Identity(2, 2)}, omega);
  const Mat X = gaussian_matrix(rng, psi.rows(), 2);
  const std::vector<int> order{2, 0, 1};
  const Mat a = joint_log_density(m, X, psi);
  const Mat b = joint_log_density(m.permuted(order), X, psi);
  for (int k = 0; k < 3; ++k) EXPECT_LT((b.col(k) - a.col(order[k])).cwiseAbs().maxCoeff(), 1e-10);
}
