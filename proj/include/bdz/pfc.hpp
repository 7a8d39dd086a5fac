#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bdz/glasso.hpp"
#include "bdz/types.hpp"

namespace bdz {

/// Mixture parameters for K clusters over p-dimensional profile
/// coefficients. Precisions carry their Cholesky factor, covariance and
/// log-determinant; omega is (K-1) x L with class K as the zero baseline.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(std::vector<Vec> means, std::vector<Mat> precisions, Mat omega);

  int K() const { return static_cast<int>(mu.size()); }
  int dim() const { return mu.empty() ? 0 : static_cast<int>(mu.front().size()); }
  int L() const { return static_cast<int>(omega.cols()); }

  /// Installs W_k, throwing NonPD unless it passes Cholesky.
  void set_precision(int k, Mat W);
  const Mat& precision(int k) const { return W_[k]; }
  const Mat& covariance(int k) const { return sigma_[k]; }
  const Mat& cholesky(int k) const { return chol_[k]; }
  double logdet(int k) const { return logdet_[k]; }

  /// Reorders clusters; omega is re-expressed against the new baseline.
  ModelParams permuted(const std::vector<int>& order) const;

  std::vector<Vec> mu;
  Mat omega;

 private:
  std::vector<Mat> W_;
  std::vector<Mat> sigma_;
  std::vector<Mat> chol_;  // lower factor of W
  std::vector<double> logdet_;
};

struct FitConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  int max_iter = 200;
  double rel_tol = 1e-6;
  int n_init = 5;
  int kmeans_restarts = 10;
  std::uint64_t seed = 20240611;
  /// Keep omega at zero (uniform mixing) instead of fitting it.
  bool fix_mixing = false;
  int max_reseeds = 10;
  /// Newton steps of the mixing update per EM iteration.
  int mixing_newton_steps = 5;
  /// Precision update per EM iteration: a warm-started, capped glasso run.
  GlassoOptions glasso{25, 1e-8, 1e-4, 200};
  unsigned threads = 1;
  /// Called after every EM iteration with the new parameters and the
  /// posteriors they were estimated from.
  std::function<void(int iteration, const ModelParams&, const Mat& tau)> observer;
};

struct FittedModel {
  ModelParams params;
  Mat tau;  // N x K posteriors at the final parameters
  std::vector<int> labels;
  std::vector<double> objective_trace;
  /// Iterations after which a cluster was re-seeded; the trace is only
  /// monotone between these points.
  std::vector<int> reseed_iterations;
  double penalized_objective = 0.0;
  double loglik = 0.0;  // unpenalized
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::uint64_t seed = 0;
  int restart = 0;
  int iterations = 0;
  bool converged = false;
};

/// Softmax of (psi . omega_1, ..., psi . omega_{K-1}, 0).
Vec mixing_proportions(const Mat& omega, const Vec& psi_row);

/// Multivariate normal log-density in precision form. Throws NonPD.
double log_density(const Vec& beta, const Vec& mu, const Mat& W, double logdet);

/// N x K matrix log pi_k(v_i) + log f_k(beta_i).
Mat joint_log_density(const ModelParams& params, const Mat& betas, const Mat& psi);

/// Posterior membership probabilities; rows sum to one. Throws
/// DegenerateRow when a row has no finite component.
Mat e_step(const ModelParams& params, const Mat& betas, const Mat& psi);

/// Effective cluster mass below which a cluster counts as empty.
double empty_cluster_mass(int dim);

/// Maximizes sum_i tau_ik log f_k - lambda1 |mu_k|_1 per cluster by cyclic
/// coordinate descent started from `start`. Throws EmptyCluster when a
/// cluster's mass is below empty_cluster_mass.
std::vector<Vec> m_step_means(const Mat& tau, const Mat& betas, const std::vector<Mat>& precisions, double lambda1,
                              const std::vector<Vec>& start);

/// tau-weighted scatter of cluster k around mu, divided by the mass.
Mat weighted_scatter(const Mat& tau, const Mat& betas, int k, const Vec& mu);

/// Graphical-lasso update for one cluster: penalty 2 lambda2 / n_k on the
/// weighted scatter.
GlassoResult m_step_precision(const Mat& tau, const Mat& betas, int k, const Vec& mu, double lambda2,
                              const GlassoOptions& options = {});

/// All clusters; throws GlassoNonConvergence if any cluster misses the gap.
std::vector<Mat> m_step_precisions(const Mat& tau, const Mat& betas, const std::vector<Vec>& mu, double lambda2);

/// Weighted multinomial logit update of omega, started from omega0.
Mat m_step_mixing(const Mat& tau, const Mat& psi, const Mat& omega0, int newton_steps = 25);

double loglik(const ModelParams& params, const Mat& betas, const Mat& psi);
double penalized_loglik(const ModelParams& params, const Mat& betas, const Mat& psi, double lambda1, double lambda2);

/// k-means (k-means++ seeding, best of `restarts`) on the coefficients.
std::vector<int> kmeans(const Mat& data, int K, std::uint64_t seed, int restarts, double* inertia = nullptr);

/// Means from k-means clusters, W_k = (diag(pooled within covariance) +
/// 1e-3)^-1, omega = 0. Throws BadK for K < 1 or K > N.
ModelParams init_model(const Mat& betas, int K, const Mat& psi, std::uint64_t seed, int kmeans_restarts = 10);

/// EM from a given starting point.
FittedModel run_em(const Mat& betas, const Mat& psi, ModelParams start, const FitConfig& config);

/// Best of config.n_init EM runs from independent k-means starts.
FittedModel fit_em(const Mat& betas, const Mat& psi, int K, const FitConfig& config);

/// Row argmax; ties go to the lowest index.
std::vector<int> hard_assignment(const Mat& tau);

}  // namespace bdz
