#pragma once

#include "bdz/types.hpp"

namespace bdz {

/// Row-wise log mixing proportions log pi_ik for log-odds
/// zeta_k = psi_i . omega_k (k < K) and zeta_K = 0. omega is (K-1) x L.
Mat log_mixing_matrix(const Mat& omega, const Mat& psi);

/// sum_i sum_k w_ik log pi_ik.
double mlogit_objective(const Mat& weights, const Mat& psi, const Mat& omega);

struct MlogitOptions {
  int max_iter = 25;
  double step_tol = 1e-10;  // largest coefficient change
  double ridge = 1e-6;
};

struct MlogitResult {
  Mat omega;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Weighted multinomial logit by Newton's method with a ridge on the
/// Hessian and step halving, started from omega0. Every accepted step
/// increases the objective.
MlogitResult fit_weighted_mlogit(const Mat& weights, const Mat& psi, const Mat& omega0,
                                 const MlogitOptions& options = {});

}  // namespace bdz
