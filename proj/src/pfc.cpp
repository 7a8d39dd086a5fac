#include "bdz/pfc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>

#include "bdz/error.hpp"
#include "bdz/mlogit.hpp"
#include "bdz/parallel.hpp"
#include "bdz/rng.hpp"

namespace bdz {

ModelParams::ModelParams(std::vector<Vec> means, std::vector<Mat> precisions, Mat omega_)
    : mu(std::move(means)), omega(std::move(omega_)) {
  if (mu.empty() || precisions.size() != mu.size()) throw Error(ErrorKind::BadK, "need one precision per mean");
  if (omega.rows() != static_cast<Eigen::Index>(mu.size()) - 1) {
    throw Error(ErrorKind::BadConfig, "omega must have K - 1 rows");
  }
  W_.resize(mu.size());
  sigma_.resize(mu.size());
  chol_.resize(mu.size());
  logdet_.resize(mu.size());
  for (int k = 0; k < K(); ++k) {
    if (mu[k].size() != mu[0].size()) throw Error(ErrorKind::BadConfig, "means disagree on dimension");
    set_precision(k, std::move(precisions[k]));
  }
}

void ModelParams::set_precision(int k, Mat W) {
  if (W.rows() != dim() || W.cols() != dim()) throw Error(ErrorKind::BadConfig, "precision has the wrong size");
  W = (0.5 * (W + W.transpose())).eval();
  Eigen::LLT<Mat> llt(W);
  if (llt.info() != Eigen::Success || !W.allFinite()) {
    throw Error(ErrorKind::NonPD, "precision of cluster " + std::to_string(k + 1) + " is not positive definite");
  }
  Mat L = llt.matrixL();
  const double ld = 2.0 * L.diagonal().array().log().sum();
  if (!std::isfinite(ld)) throw Error(ErrorKind::NonPD, "precision log-determinant is not finite");
  sigma_[k] = llt.solve(Mat::Identity(dim(), dim()));
  chol_[k] = std::move(L);
  logdet_[k] = ld;
  W_[k] = std::move(W);
}

ModelParams ModelParams::permuted(const std::vector<int>& order) const {
  const int K_ = K();
  if (static_cast<int>(order.size()) != K_) throw Error(ErrorKind::BadConfig, "permutation has the wrong length");
  auto row = [&](int k) -> Vec { return k < K_ - 1 ? Vec(omega.row(k).transpose()) : Vec::Zero(omega.cols()); };
  std::vector<Vec> means;
  std::vector<Mat> precs;
  Mat om(K_ - 1, omega.cols());
  const Vec base = row(order[K_ - 1]);
  for (int c = 0; c < K_; ++c) {
    means.push_back(mu[order[c]]);
    precs.push_back(W_[order[c]]);
    if (c < K_ - 1) om.row(c) = (row(order[c]) - base).transpose();
  }
  return ModelParams(std::move(means), std::move(precs), std::move(om));
}

Vec mixing_proportions(const Mat& omega, const Vec& psi_row) {
  Mat psi = psi_row.transpose();
  return log_mixing_matrix(omega, psi).row(0).array().exp().transpose();
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_density_chol(const Vec& beta, const Vec& mu, const Mat& chol, double logdet) {
  // W = L L'; quadratic form is |L' (beta - mu)|^2.
  const Vec z = chol.transpose() * (beta - mu);
  return -0.5 * static_cast<double>(beta.size()) * kLog2Pi + 0.5 * logdet - 0.5 * z.squaredNorm();
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

void check_shapes(const ModelParams& params, const Mat& betas, const Mat& psi) {
  if (betas.cols() != params.dim()) throw Error(ErrorKind::BadConfig, "coefficient dimension mismatch");
  if (psi.rows() != betas.rows()) throw Error(ErrorKind::BadConfig, "spatial basis has the wrong number of rows");
  if (params.K() > 1 && psi.cols() != params.L()) throw Error(ErrorKind::BadConfig, "omega and psi disagree on L");
}

}  // namespace

double log_density(const Vec& beta, const Vec& mu, const Mat& W, double logdet) {
  if (beta.size() != mu.size() || W.rows() != mu.size() || W.cols() != mu.size()) {
    throw Error(ErrorKind::BadConfig, "log_density: dimension mismatch");
  }
  Eigen::LLT<Mat> llt(W);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NonPD, "precision is not positive definite");
  return log_density_chol(beta, mu, llt.matrixL(), logdet);
}

Mat joint_log_density(const ModelParams& params, const Mat& betas, const Mat& psi) {
  check_shapes(params, betas, psi);
  const Eigen::Index n = betas.rows();
  Mat out = log_mixing_matrix(params.omega, psi);
  for (int k = 0; k < params.K(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, k) += log_density_chol(betas.row(i).transpose(), params.mu[k], params.cholesky(k), params.logdet(k));
    }
  }
  return out;
}

namespace {

double row_lse(const Mat& m, Eigen::Index i) {
  const double top = m.row(i).maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((m.row(i).array() - top).exp().sum());
}

}  // namespace

Mat e_step(const ModelParams& params, const Mat& betas, const Mat& psi) {
  Mat lj = joint_log_density(params, betas, psi);
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    const double lse = row_lse(lj, i);
    if (!std::isfinite(lse)) {
      throw Error(ErrorKind::DegenerateRow, "row " + std::to_string(i) + " has no finite component density");
    }
    lj.row(i) = (lj.row(i).array() - lse).exp();
    lj.row(i) /= lj.row(i).sum();
  }
  return lj;
}

double empty_cluster_mass(int dim) { return static_cast<double>(dim) + 1.0; }

std::vector<Vec> m_step_means(const Mat& tau, const Mat& betas, const std::vector<Mat>& precisions, double lambda1,
                              const std::vector<Vec>& start) {
  const int K = static_cast<int>(tau.cols());
  const Eigen::Index p = betas.cols();
  std::vector<Vec> out(K);
  for (int k = 0; k < K; ++k) {
    const double nk = tau.col(k).sum();
    if (nk < empty_cluster_mass(static_cast<int>(p))) {
      throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(k + 1) + " has mass " + std::to_string(nk));
    }
    const Vec bar = betas.transpose() * tau.col(k) / nk;
    if (lambda1 == 0.0) {
      out[k] = bar;
      continue;
    }
    // min 1/2 nk (mu - bar)' W (mu - bar) + lambda1 |mu|_1
    const Mat& W = precisions[k];
    Vec mu = start[k];
    Vec wd = W * (mu - bar);
    for (int sweep = 0; sweep < 10000; ++sweep) {
      double change = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double a = nk * W(j, j);
        const double z = a * mu(j) - nk * wd(j);
        const double nj = soft_threshold(z, lambda1) / a;
        const double d = nj - mu(j);
        if (d != 0.0) {
          wd += d * W.col(j);
          mu(j) = nj;
          change = std::max(change, std::abs(d) * std::sqrt(W(j, j)));
        }
      }
      if (change < 1e-12) break;
    }
    out[k] = mu;
  }
  return out;
}

Mat weighted_scatter(const Mat& tau, const Mat& betas, int k, const Vec& mu) {
  const double nk = tau.col(k).sum();
  const Mat centered = betas.rowwise() - mu.transpose();
  return centered.transpose() * tau.col(k).asDiagonal() * centered / nk;
}

GlassoResult m_step_precision(const Mat& tau, const Mat& betas, int k, const Vec& mu, double lambda2,
                              const GlassoOptions& options) {
  const double nk = tau.col(k).sum();
  if (!(nk > 0.0)) throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(k + 1) + " has no mass");
  return graphical_lasso(weighted_scatter(tau, betas, k, mu), 2.0 * lambda2 / nk, options);
}

std::vector<Mat> m_step_precisions(const Mat& tau, const Mat& betas, const std::vector<Vec>& mu, double lambda2) {
  std::vector<Mat> out;
  for (int k = 0; k < static_cast<int>(mu.size()); ++k) {
    auto res = m_step_precision(tau, betas, k, mu[k], lambda2);
    if (!res.converged) {
      throw Error(ErrorKind::GlassoNonConvergence,
                  "graphical lasso for cluster " + std::to_string(k + 1) + " stopped with gap " + std::to_string(res.gap));
    }
    out.push_back(std::move(res.precision));
  }
  return out;
}

Mat m_step_mixing(const Mat& tau, const Mat& psi, const Mat& omega0, int newton_steps) {
  MlogitOptions opts;
  opts.max_iter = newton_steps;
  auto res = fit_weighted_mlogit(tau, psi, omega0, opts);
  return res.omega;
}

double loglik(const ModelParams& params, const Mat& betas, const Mat& psi) {
  const Mat lj = joint_log_density(params, betas, psi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < lj.rows(); ++i) total += row_lse(lj, i);
  return total;
}

double penalized_loglik(const ModelParams& params, const Mat& betas, const Mat& psi, double lambda1, double lambda2) {
  double pen = 0.0;
  for (int k = 0; k < params.K(); ++k) {
    pen += lambda1 * params.mu[k].cwiseAbs().sum() + lambda2 * params.precision(k).cwiseAbs().sum();
  }
  return loglik(params, betas, psi) - pen;
}

std::vector<int> kmeans(const Mat& data, int K, std::uint64_t seed, int restarts, double* inertia) {
  const Eigen::Index n = data.rows();
  if (K < 1 || K > n) throw Error(ErrorKind::BadK, "K must lie in [1, N]");
  CounterRng root(seed);
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(r));
    // k-means++ seeding
    Mat centers(K, data.cols());
    centers.row(0) = data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Vec d2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < K; ++c) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (pick = 0; pick < n - 1; ++pick) {
          u -= d2(pick);
          if (u < 0.0) break;
        }
      } else {
        pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      centers.row(c) = data.row(pick);
      d2 = d2.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    std::vector<int> labels(n, -1);
    double total = 0.0;
    for (int it = 0; it < 300; ++it) {
      bool changed = false;
      total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < K; ++c) {
          const double d = (data.row(i) - centers.row(c)).squaredNorm();
          if (d < bestd) {
            bestd = d;
            arg = c;
          }
        }
        total += bestd;
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Mat sums = Mat::Zero(K, data.cols());
      std::vector<int> counts(K, 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[i]) += data.row(i);
        ++counts[labels[i]];
      }
      for (int c = 0; c < K; ++c) {
        if (counts[c] > 0) {
          centers.row(c) = sums.row(c) / counts[c];
          continue;
        }
        // Empty cluster: move it to the point farthest from its center.
        Eigen::Index far = 0;
        double fd = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (data.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        centers.row(c) = data.row(far);
      }
    }
    if (total < best_inertia) {
      best_inertia = total;
      best = labels;
    }
  }
  if (inertia) *inertia = best_inertia;
  return best;
}

namespace {

Mat pooled_diagonal_precision(const Mat& betas, const std::vector<int>& labels, int K) {
  const Eigen::Index n = betas.rows();
  const Eigen::Index p = betas.cols();
  Mat means = Mat::Zero(K, p);
  std::vector<int> counts(K, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    means.row(labels[i]) += betas.row(i);
    ++counts[labels[i]];
  }
  for (int k = 0; k < K; ++k) {
    if (counts[k] > 0) means.row(k) /= counts[k];
  }
  Vec var = Vec::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) var += (betas.row(i) - means.row(labels[i])).transpose().array().square().matrix();
  var /= static_cast<double>(std::max<Eigen::Index>(n - K, 1));
  return (var.array() + 1e-3).inverse().matrix().asDiagonal();
}

}  // namespace

ModelParams init_model(const Mat& betas, int K, const Mat& psi, std::uint64_t seed, int kmeans_restarts) {
  const Eigen::Index n = betas.rows();
  const Eigen::Index p = betas.cols();
  if (K < 1 || K > n) throw Error(ErrorKind::BadK, "K must lie in [1, N]");
  if (psi.rows() != n) throw Error(ErrorKind::BadConfig, "spatial basis has the wrong number of rows");
  const std::vector<int> labels = kmeans(betas, K, seed, kmeans_restarts);
  std::vector<Vec> means(K, Vec::Zero(p));
  std::vector<int> counts(K, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    means[labels[i]] += betas.row(i).transpose();
    ++counts[labels[i]];
  }
  for (int k = 0; k < K; ++k) {
    if (counts[k] > 0) means[k] /= counts[k];
  }
  const Mat W = pooled_diagonal_precision(betas, labels, K);
  return ModelParams(std::move(means), std::vector<Mat>(K, W), Mat::Zero(K - 1, psi.cols()));
}

namespace {

double cluster_q(const Mat& S, const Mat& W, double nk, double lambda2) {
  // (n_k / 2)(log det W - tr(S W)) - lambda2 |W|_1
  return 0.5 * nk * glasso_objective(S, W, 0.0) - lambda2 * W.cwiseAbs().sum();
}

void reseed_cluster(ModelParams& params, const Mat& tau, const Mat& betas, int k) {
  const Eigen::Index n = betas.rows();
  Eigen::Index pick = 0;
  double lowest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = tau.row(i).maxCoeff();
    if (m < lowest) {
      lowest = m;
      pick = i;
    }
  }
  params.mu[k] = betas.row(pick).transpose();
  std::vector<int> labels = hard_assignment(tau);
  params.set_precision(k, pooled_diagonal_precision(betas, labels, params.K()));
}

// A fresh seed usually wins only its own point; for this iteration hand the
// cluster the `count` points nearest to it so the M-step has enough mass.
void claim_neighbours(Mat& tau, const Mat& betas, const Vec& centre, int k, int count) {
  const Eigen::Index n = betas.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vec d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = (betas.row(i).transpose() - centre).squaredNorm();
  const auto m = static_cast<std::ptrdiff_t>(std::min<Eigen::Index>(count, n));
  std::partial_sort(order.begin(), order.begin() + m, order.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return d(a) < d(b) || (d(a) == d(b) && a < b); });
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    tau.row(order[j]).setZero();
    tau(order[j], k) = 1.0;
  }
}

}  // namespace

FittedModel run_em(const Mat& betas, const Mat& psi, ModelParams params, const FitConfig& config) {
  check_shapes(params, betas, psi);
  if (config.lambda1 < 0.0 || config.lambda2 < 0.0) throw Error(ErrorKind::BadConfig, "penalties must be >= 0");
  if (!(config.rel_tol > 0.0) || config.max_iter < 1) throw Error(ErrorKind::BadConfig, "bad EM tolerances");
  const int K = params.K();
  const int p = params.dim();
  if (config.fix_mixing) params.omega.setZero();

  FittedModel fit;
  fit.lambda1 = config.lambda1;
  fit.lambda2 = config.lambda2;
  double obj = penalized_loglik(params, betas, psi, config.lambda1, config.lambda2);
  fit.objective_trace.push_back(obj);
  int reseeds = 0;

  for (int it = 1; it <= config.max_iter; ++it) {
    Mat tau = e_step(params, betas, psi);

    std::vector<int> reseeded_clusters;
    for (int k = 0; k < K; ++k) {
      if (tau.col(k).sum() < empty_cluster_mass(p)) {
        if (++reseeds > config.max_reseeds) {
          throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(k + 1) + " keeps emptying");
        }
        reseed_cluster(params, tau, betas, k);
        reseeded_clusters.push_back(k);
      }
    }
    const bool reseeded = !reseeded_clusters.empty();
    if (reseeded) {
      // The old log-odds may give the new seed no prior mass anywhere.
      params.omega.setZero();
      tau = e_step(params, betas, psi);
      for (int k : reseeded_clusters) {
        if (tau.col(k).sum() < empty_cluster_mass(p)) claim_neighbours(tau, betas, params.mu[k], k, p + 1);
      }
      for (int k = 0; k < K; ++k) {
        if (tau.col(k).sum() < empty_cluster_mass(p)) {
          throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(k + 1) + " is empty after re-seeding");
        }
      }
      fit.reseed_iterations.push_back(it);
    }

    params.mu = m_step_means(tau, betas, [&] {
      std::vector<Mat> w;
      for (int k = 0; k < K; ++k) w.push_back(params.precision(k));
      return w;
    }(), config.lambda1, params.mu);

    for (int k = 0; k < K; ++k) {
      const double nk = tau.col(k).sum();
      const Mat S = weighted_scatter(tau, betas, k, params.mu[k]);
      GlassoResult g;
      try {
        g = graphical_lasso(S, 2.0 * config.lambda2 / nk, config.glasso, &params.precision(k));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonPD) throw;
        continue;
      }
      // Accept the update only when it does not lower this cluster's share
      // of the expected complete-data objective.
      if (cluster_q(S, g.precision, nk, config.lambda2) >= cluster_q(S, params.precision(k), nk, config.lambda2)) {
        try {
          params.set_precision(k, g.precision);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NonPD) throw;
        }
      }
    }

    if (!config.fix_mixing && K > 1) params.omega = m_step_mixing(tau, psi, params.omega, config.mixing_newton_steps);

    if (config.observer) config.observer(it, params, tau);

    const double next = penalized_loglik(params, betas, psi, config.lambda1, config.lambda2);
    fit.objective_trace.push_back(next);
    fit.iterations = it;
    const double change = std::abs(next - obj);
    obj = next;
    if (!reseeded && change <= config.rel_tol * std::abs(next)) {
      fit.converged = true;
      break;
    }
  }

  fit.tau = e_step(params, betas, psi);
  fit.labels = hard_assignment(fit.tau);
  fit.penalized_objective = obj;
  fit.loglik = loglik(params, betas, psi);
  fit.params = std::move(params);
  return fit;
}

FittedModel fit_em(const Mat& betas, const Mat& psi, int K, const FitConfig& config) {
  if (K < 1 || K > betas.rows()) throw Error(ErrorKind::BadK, "K must lie in [1, N]");
  const int runs = std::max(config.n_init, 1);
  std::vector<std::optional<FittedModel>> results(runs);
  std::vector<std::string> failures(runs);
  const CounterRng root(config.seed);
  parallel_for(static_cast<std::size_t>(runs), config.threads, [&](std::size_t r) {
    const std::uint64_t seed = root.split(r).next_u64();
    try {
      FitConfig local = config;
      local.observer = nullptr;
      if (config.observer && r == 0) local.observer = config.observer;
      ModelParams start = init_model(betas, K, psi, seed, config.kmeans_restarts);
      FittedModel fit = run_em(betas, psi, std::move(start), local);
      fit.seed = seed;
      fit.restart = static_cast<int>(r);
      results[r] = std::move(fit);
    } catch (const Error& e) {
      failures[r] = std::string(e.name()) + ": " + e.what();
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!results[r]) continue;
    if (!best || results[r]->penalized_objective > results[*best]->penalized_objective) best = r;
  }
  if (!best) {
    throw Error(ErrorKind::AllRestartsFailed, "all " + std::to_string(runs) + " EM restarts failed; first: " + failures[0]);
  }
  return std::move(*results[*best]);
}

std::vector<int> hard_assignment(const Mat& tau) {
  std::vector<int> labels(tau.rows(), 0);
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    int arg = 0;
    for (Eigen::Index k = 1; k < tau.cols(); ++k) {
      if (tau(i, k) > tau(i, arg)) arg = static_cast<int>(k);
    }
    labels[i] = arg;
  }
  return labels;
}

}  // namespace bdz
