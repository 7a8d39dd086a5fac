#include "bdz/glasso.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "bdz/error.hpp"

namespace bdz {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

Mat drop(const Mat& m, Eigen::Index j) {
  const Eigen::Index p = m.rows();
  Mat out(p - 1, p - 1);
  for (Eigen::Index r = 0, rr = 0; r < p; ++r) {
    if (r == j) continue;
    for (Eigen::Index c = 0, cc = 0; c < p; ++c) {
      if (c == j) continue;
      out(rr, cc++) = m(r, c);
    }
    ++rr;
  }
  return out;
}

Vec drop_col(const Mat& m, Eigen::Index j) {
  const Eigen::Index p = m.rows();
  Vec out(p - 1);
  for (Eigen::Index r = 0, rr = 0; r < p; ++r) {
    if (r != j) out(rr++) = m(r, j);
  }
  return out;
}

}  // namespace

double glasso_objective(const Mat& S, const Mat& W, double rho) {
  Eigen::LLT<Mat> llt(W);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return logdet - (S.cwiseProduct(W)).sum() - rho * W.cwiseAbs().sum();
}

GlassoResult graphical_lasso(const Mat& S, double rho, const GlassoOptions& options, const Mat* warm_start) {
  const Eigen::Index p = S.rows();
  if (p == 0 || S.cols() != p) throw Error(ErrorKind::BadConfig, "glasso needs a square matrix");
  if (rho < 0.0) throw Error(ErrorKind::BadConfig, "glasso penalty must be >= 0");
  GlassoResult res;

  if (p == 1) {
    const double s = S(0, 0) + rho;
    if (!(s > 0.0)) throw Error(ErrorKind::NonPD, "scatter is zero and unpenalized");
    res.covariance = Mat::Constant(1, 1, s);
    res.precision = Mat::Constant(1, 1, 1.0 / s);
    res.gap = std::abs(S(0, 0) / s + rho / s - 1.0);
    res.converged = true;
    res.sweeps = 1;
    return res;
  }

  Mat sigma = S;
  Mat beta = Mat::Zero(p - 1, p);
  if (warm_start && warm_start->rows() == p && warm_start->cols() == p) {
    Eigen::LLT<Mat> llt(*warm_start);
    if (llt.info() == Eigen::Success) {
      sigma = llt.solve(Mat::Identity(p, p));
      for (Eigen::Index j = 0; j < p; ++j) {
        beta.col(j) = -drop_col(*warm_start, j) / (*warm_start)(j, j);
      }
    }
  }
  sigma.diagonal() = S.diagonal().array() + rho;
  double scale = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (i != j) scale += std::abs(S(i, j));
    }
  }
  scale = std::max(scale / static_cast<double>(p * (p - 1)), 1e-300);

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    const Mat previous = sigma;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Mat w11 = drop(sigma, j);
      const Vec s12 = drop_col(S, j);
      Vec b = beta.col(j);
      if (rho == 0.0) {
        Eigen::LDLT<Mat> ldlt(w11);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
          throw Error(ErrorKind::NonPD, "scatter matrix is singular and unpenalized");
        }
        b = ldlt.solve(s12);
      } else {
        // Lasso: min 1/2 b' W11 b - s12' b + rho |b|_1.
        Vec wb = w11 * b;
        for (int inner = 0; inner < options.max_inner; ++inner) {
          double delta = 0.0;
          for (Eigen::Index l = 0; l < p - 1; ++l) {
            const double r = s12(l) - (wb(l) - w11(l, l) * b(l));
            const double nb = soft_threshold(r, rho) / w11(l, l);
            const double d = nb - b(l);
            if (d != 0.0) {
              wb += d * w11.col(l);
              b(l) = nb;
              delta = std::max(delta, std::abs(d) * w11(l, l));
            }
          }
          if (delta < 1e-12 * scale) break;
        }
      }
      beta.col(j) = b;
      const Vec w12 = w11 * b;
      for (Eigen::Index r = 0, rr = 0; r < p; ++r) {
        if (r == j) continue;
        sigma(r, j) = w12(rr);
        sigma(j, r) = w12(rr);
        ++rr;
      }
    }
    res.sweeps = sweep;
    const double change = (sigma - previous).cwiseAbs().sum() / static_cast<double>(p * (p - 1));
    if (change < options.tol * scale || rho == 0.0) break;
  }

  Mat theta = Mat::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Vec b = beta.col(j);
    const Vec s12 = drop_col(sigma, j);
    const double t22 = 1.0 / (sigma(j, j) - s12.dot(b));
    theta(j, j) = t22;
    for (Eigen::Index r = 0, rr = 0; r < p; ++r) {
      if (r == j) continue;
      theta(r, j) = -b(rr++) * t22;
    }
  }
  theta = (0.5 * (theta + theta.transpose())).eval();
  res.precision = theta;
  res.covariance = sigma;
  res.gap = std::abs(S.cwiseProduct(theta).sum() + rho * theta.cwiseAbs().sum() - static_cast<double>(p));
  Eigen::LLT<Mat> llt(theta);
  res.converged = llt.info() == Eigen::Success && res.gap < options.gap_tol;
  return res;
}

}  // namespace bdz
