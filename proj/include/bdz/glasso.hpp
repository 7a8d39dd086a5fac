#pragma once

#include "bdz/types.hpp"

namespace bdz {

struct GlassoOptions {
  int max_sweeps = 500;
  double tol = 1e-10;        // relative change of the covariance estimate
  double gap_tol = 1e-4;     // required duality gap
  int max_inner = 1000;
};

struct GlassoResult {
  Mat precision;
  Mat covariance;
  double gap = 0.0;
  int sweeps = 0;
  bool converged = false;
};

/// Maximizes log det W - tr(S W) - rho * sum_{j,q} |W_jq| (diagonal
/// penalized) by block coordinate descent over the columns of the
/// covariance estimate. With rho = 0 the column subproblems are solved
/// exactly, giving S^-1 in one sweep. The duality gap reported is
/// tr(S W) + rho ||W||_1 - p. A positive definite `warm_start` precision
/// seeds the column solutions.
GlassoResult graphical_lasso(const Mat& S, double rho, const GlassoOptions& options = {},
                             const Mat* warm_start = nullptr);

/// The glasso objective above, -inf when W is not positive definite.
double glasso_objective(const Mat& S, const Mat& W, double rho);

}  // namespace bdz
