#include "bdz/mlogit.hpp"

#include <cmath>
#include <limits>

#include "bdz/error.hpp"

namespace bdz {

Mat log_mixing_matrix(const Mat& omega, const Mat& psi) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index km1 = omega.rows();
  if (km1 > 0 && omega.cols() != psi.cols()) throw Error(ErrorKind::BadConfig, "omega and psi disagree on L");
  Mat z = Mat::Zero(n, km1 + 1);
  if (km1 > 0) z.leftCols(km1) = psi * omega.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = z.row(i).maxCoeff();
    const double lse = top + std::log((z.row(i).array() - top).exp().sum());
    z.row(i).array() -= lse;
  }
  return z;
}

double mlogit_objective(const Mat& weights, const Mat& psi, const Mat& omega) {
  const Mat lp = log_mixing_matrix(omega, psi);
  double f = 0.0;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    for (Eigen::Index k = 0; k < lp.cols(); ++k) {
      if (weights(i, k) != 0.0) f += weights(i, k) * lp(i, k);
    }
  }
  return f;
}

MlogitResult fit_weighted_mlogit(const Mat& weights, const Mat& psi, const Mat& omega0, const MlogitOptions& options) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index L = psi.cols();
  const Eigen::Index km1 = weights.cols() - 1;
  if (weights.rows() != n || omega0.rows() != km1 || (km1 > 0 && omega0.cols() != L)) {
    throw Error(ErrorKind::BadConfig, "weighted multinomial logit: dimension mismatch");
  }
  MlogitResult res;
  res.omega = omega0;
  res.objective = mlogit_objective(weights, psi, res.omega);
  if (km1 == 0) {
    res.converged = true;
    return res;
  }
  const Vec totals = weights.rowwise().sum();
  const Eigen::Index P = km1 * L;

  for (int it = 0; it < options.max_iter; ++it) {
    const Mat pi = log_mixing_matrix(res.omega, psi).array().exp();
    Vec grad(P);
    Mat hess(P, P);  // negative Hessian
    for (Eigen::Index k = 0; k < km1; ++k) {
      const Vec r = weights.col(k) - totals.cwiseProduct(pi.col(k));
      grad.segment(k * L, L) = psi.transpose() * r;
      for (Eigen::Index c = k; c < km1; ++c) {
        Vec d = -totals.cwiseProduct(pi.col(k)).cwiseProduct(pi.col(c));
        if (c == k) d += totals.cwiseProduct(pi.col(k));
        const Mat block = psi.transpose() * d.asDiagonal() * psi;
        hess.block(k * L, c * L, L, L) = block;
        hess.block(c * L, k * L, L, L) = block.transpose();
      }
    }
    hess.diagonal().array() += options.ridge;
    const Vec step = hess.ldlt().solve(grad);
    Mat direction = Eigen::Map<const Mat>(step.data(), L, km1).transpose();

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Mat trial = res.omega + t * direction;
      const double f = mlogit_objective(weights, psi, trial);
      if (std::isfinite(f) && f >= res.objective) {
        res.omega = trial;
        res.objective = f;
        accepted = true;
        res.iterations = it + 1;
        const double moved = t * direction.cwiseAbs().maxCoeff();
        if (moved <= options.step_tol) res.converged = true;
        break;
      }
    }
    if (!accepted) {
      res.converged = true;
      break;
    }
    if (res.converged) break;
  }
  return res;
}

}  // namespace bdz
