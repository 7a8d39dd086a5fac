#include "bdz/smoothing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "bdz/error.hpp"

namespace bdz {

BSplineBasis::BSplineBasis(int count, double upper, int degree)
    : count_(count), degree_(degree), upper_(upper) {
  if (degree < 1 || count < degree + 1 || !(upper > 0.0)) {
    throw Error(ErrorKind::BadConfig, "B-spline basis needs degree >= 1, count >= degree + 1, Q > 0");
  }
  const int interior = count - degree - 1;
  knots_.assign(degree + 1, 0.0);
  for (int i = 1; i <= interior; ++i) knots_.push_back(upper * i / (interior + 1));
  knots_.insert(knots_.end(), degree + 1, upper);
}

int BSplineBasis::find_span(double q) const {
  const int n = count_ - 1;
  if (q >= knots_[n + 1]) return n;
  if (q <= knots_[degree_]) return degree_;
  int low = degree_;
  int high = n + 1;
  int mid = (low + high) / 2;
  while (q < knots_[mid] || q >= knots_[mid + 1]) {
    if (q < knots_[mid]) {
      high = mid;
    } else {
      low = mid;
    }
    mid = (low + high) / 2;
  }
  return mid;
}

// Nonzero basis functions and their derivatives (de Boor recurrence in the
// Piegl-Tiller formulation).
void BSplineBasis::evaluate(double q, int order, Mat& out) const {
  const int p = degree_;
  out.setZero(order + 1, count_);
  const int span = find_span(q);

  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> left(p + 1, 0.0), right(p + 1, 0.0);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = q - knots_[span + 1 - j];
    right[j] = knots_[span + j] - q;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  const int first = span - p;
  for (int j = 0; j <= p; ++j) out(0, first + j) = ndu[j][p];

  const int top = std::min(order, p);
  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= top; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      out(k, first + r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= top; ++k) {
    for (int j = 0; j <= p; ++j) out(k, first + j) *= factor;
    factor *= (p - k);
  }
}

Vec BSplineBasis::values(double q) const {
  Mat d;
  evaluate(q, 0, d);
  return d.row(0).transpose();
}

bool BasisSystem::same_grid(const BasisSystem& other) const {
  return nodes.size() == other.nodes.size() && upper() == other.upper();
}

BasisSystem build_basis(int count, double upper, int degree, int quadrature_points) {
  if (count < 4) throw Error(ErrorKind::BadConfig, "need at least 4 basis functions");
  if (quadrature_points < 200) throw Error(ErrorKind::BadConfig, "quadrature grid needs at least 200 points");
  BasisSystem b{BSplineBasis(count, upper, degree), {}, 0.0, {}, {}, {}, {}};
  const int n = quadrature_points;
  b.step = upper / (n - 1);
  b.nodes.resize(n);
  b.phi.resize(n, count);
  b.dphi.resize(n, count);
  Mat d;
  for (int i = 0; i < n; ++i) {
    b.nodes[i] = (i == n - 1) ? upper : upper * i / (n - 1);
    b.spline.evaluate(b.nodes[i], 1, d);
    b.phi.row(i) = d.row(0);
    b.dphi.row(i) = d.row(1);
  }
  const double h = b.step;
  b.Phi.setZero(n, count);
  for (int i = 1; i < n; ++i) {
    b.Phi.row(i) = b.Phi.row(i - 1) + 0.5 * h * (b.phi.row(i - 1) + b.phi.row(i)) +
                   (h * h / 12.0) * (b.dphi.row(i - 1) - b.dphi.row(i));
  }

  // Second derivatives are piecewise polynomial of degree p - 2 between
  // knots; 4-point Gauss-Legendre per span is exact up to degree 5.
  static constexpr std::array<double, 4> gl_x = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                                  0.8611363115940526};
  static constexpr std::array<double, 4> gl_w = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                                  0.3478548451374538};
  b.roughness.setZero(count, count);
  if (degree >= 2) {
    const auto& k = b.spline.knots();
    for (std::size_t s = 0; s + 1 < k.size(); ++s) {
      const double lo = k[s], hi = k[s + 1];
      if (!(hi > lo)) continue;
      for (std::size_t g = 0; g < gl_x.size(); ++g) {
        const double x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl_x[g];
        b.spline.evaluate(x, 2, d);
        const Vec dd = d.row(2).transpose();
        b.roughness.noalias() += (0.5 * (hi - lo) * gl_w[g]) * dd * dd.transpose();
      }
    }
  }
  return b;
}

namespace {

void check_domain(double q, double upper) {
  if (!(q >= -1e-12 && q <= upper + 1e-12)) {
    throw Error(ErrorKind::OutOfDomain, "q = " + std::to_string(q) + " outside [0, Q]");
  }
}

Eigen::Map<const Vec> as_vec(std::span<const double> s) {
  return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

double evaluate_unconstrained(std::span<const double> alpha, const BasisSystem& basis, double q) {
  if (static_cast<int>(alpha.size()) != basis.size()) {
    throw Error(ErrorKind::BasisMismatch, "coefficient count does not match basis size");
  }
  check_domain(q, basis.upper());
  return basis.spline.values(std::clamp(q, 0.0, basis.upper())).dot(as_vec(alpha));
}

MonotoneTransform::MonotoneTransform(std::span<const double> alpha, const BasisSystem& basis, bool with_jacobian)
    : basis_(&basis), alpha_(as_vec(alpha)) {
  if (alpha_.size() != basis.size()) {
    throw Error(ErrorKind::BasisMismatch, "coefficient count does not match basis size");
  }
  w_ = basis.phi * alpha_;
  big_w_ = basis.Phi * alpha_;
  constexpr double kMaxExponent = 700.0;
  if (!big_w_.allFinite() || big_w_.cwiseAbs().maxCoeff() > kMaxExponent) {
    throw Error(ErrorKind::Overflow, "inner exponential out of range");
  }
  e_ = big_w_.array().exp();
  const Eigen::Index n = e_.size();
  const double h = basis.step;
  m_.setZero(n);
  for (Eigen::Index i = 1; i < n; ++i) {
    m_(i) = m_(i - 1) + 0.5 * h * (e_(i - 1) + e_(i)) + (h * h / 12.0) * (e_(i - 1) * w_(i - 1) - e_(i) * w_(i));
  }
  if (with_jacobian) {
    const Eigen::Index J = alpha_.size();
    g_.setZero(n, J);
    for (Eigen::Index i = 1; i < n; ++i) {
      const auto f0 = e_(i - 1) * basis.Phi.row(i - 1);
      const auto f1 = e_(i) * basis.Phi.row(i);
      const auto d0 = e_(i - 1) * (w_(i - 1) * basis.Phi.row(i - 1) + basis.phi.row(i - 1));
      const auto d1 = e_(i) * (w_(i) * basis.Phi.row(i) + basis.phi.row(i));
      g_.row(i) = g_.row(i - 1) + 0.5 * h * (f0 + f1) + (h * h / 12.0) * (d0 - d1);
    }
  }
}

int MonotoneTransform::locate(double q) const {
  check_domain(q, basis_->upper());
  const int last = static_cast<int>(basis_->nodes.size()) - 2;
  const int k = static_cast<int>(std::floor(std::max(q, 0.0) / basis_->step));
  return std::clamp(k, 0, last);
}

MonotoneTransform::Point MonotoneTransform::at(double q) const {
  const int k = locate(q);
  const double s = std::clamp(q, 0.0, basis_->upper()) - basis_->nodes[k];
  if (s == 0.0) return {m_(k), e_(k), w_(k)};
  Mat d;
  basis_->spline.evaluate(q, 1, d);
  const Vec phi = d.row(0).transpose();
  const Vec dphi = d.row(1).transpose();
  const Vec Phi = basis_->Phi.row(k).transpose() + 0.5 * s * (basis_->phi.row(k).transpose() + phi) +
                  (s * s / 12.0) * (basis_->dphi.row(k).transpose() - dphi);
  const double big_w = alpha_.dot(Phi);
  const double w = alpha_.dot(phi);
  const double e = std::exp(big_w);
  const double m = m_(k) + 0.5 * s * (e_(k) + e) + (s * s / 12.0) * (e_(k) * w_(k) - e * w);
  return {m, e, w};
}

Vec MonotoneTransform::jacobian(double q) const {
  if (g_.size() == 0) throw Error(ErrorKind::BadConfig, "transform built without jacobian");
  const int k = locate(q);
  const double s = std::clamp(q, 0.0, basis_->upper()) - basis_->nodes[k];
  if (s == 0.0) return g_.row(k).transpose();
  Mat d;
  basis_->spline.evaluate(q, 1, d);
  const Vec phi = d.row(0).transpose();
  const Vec dphi = d.row(1).transpose();
  const Vec Phi_k = basis_->Phi.row(k).transpose();
  const Vec Phi = Phi_k + 0.5 * s * (basis_->phi.row(k).transpose() + phi) +
                  (s * s / 12.0) * (basis_->dphi.row(k).transpose() - dphi);
  const double w = alpha_.dot(phi);
  const double e = std::exp(alpha_.dot(Phi));
  const Vec d0 = e_(k) * (w_(k) * Phi_k + basis_->phi.row(k).transpose());
  const Vec d1 = e * (w * Phi + phi);
  return g_.row(k).transpose() + 0.5 * s * (e_(k) * Phi_k + e * Phi) + (s * s / 12.0) * (d0 - d1);
}

MonotoneTransform integrate_transform(std::span<const double> alpha, const BasisSystem& basis) {
  return MonotoneTransform(alpha, basis, false);
}

Vec ProfileCoefficients::beta() const {
  Vec b(alpha.size() + 2);
  b(0) = xi0;
  b(1) = xi1;
  b.tail(alpha.size()) = alpha;
  return b;
}

namespace {

struct FitProblem {
  const ProfilePoints& points;
  const BasisSystem& basis;
  double lambda;

  // theta = (xi0, eta, alpha); xi1 = -exp(eta).
  double objective(const Vec& theta, Vec* residual = nullptr) const {
    const int J = basis.size();
    const Vec alpha = theta.tail(J);
    MonotoneTransform t(std::span<const double>(alpha.data(), J), basis);
    const double xi1 = -std::exp(theta(1));
    Vec r(points.q.size());
    for (std::size_t i = 0; i < points.q.size(); ++i) {
      r(i) = points.h[i] - theta(0) - xi1 * t.at(points.q[i]).m;
    }
    const double f = r.squaredNorm() + lambda * alpha.dot(basis.roughness * alpha);
    if (residual) *residual = std::move(r);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  }

  double safe_objective(const Vec& theta) const {
    try {
      return objective(theta);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Overflow) return std::numeric_limits<double>::infinity();
      throw;
    }
  }
};

void fill_curves(SmoothedProfile& out, const BasisSystem& basis) {
  const auto& c = out.coefficients;
  const int n = static_cast<int>(basis.nodes.size());
  if (c.constant_flag) {
    out.fitted = Vec::Constant(n, c.xi0);
    out.slope = Vec::Zero(n);
  } else {
    MonotoneTransform t(std::span<const double>(c.alpha.data(), c.alpha.size()), basis);
    out.fitted = c.xi0 + c.xi1 * t.m_nodes().array();
    out.slope = c.xi1 * t.slope_nodes();
    out.convexity_violations = 0;
    for (int i = 0; i < n; ++i) {
      if (c.xi1 * t.w_nodes()(i) * t.slope_nodes()(i) < -1e-8) ++out.convexity_violations;
    }
  }
}

void finish(SmoothedProfile& out, const BasisSystem& basis, const ProfilePoints& points) {
  fill_curves(out, basis);
  const auto& c = out.coefficients;
  double ss = 0.0;
  for (std::size_t i = 0; i < points.q.size(); ++i) {
    const double fit = evaluate_profile(c, basis, points.q[i], 0);
    ss += (points.h[i] - fit) * (points.h[i] - fit);
  }
  out.rmse = std::sqrt(ss / static_cast<double>(points.q.size()));
}

}  // namespace

SmoothedProfile fit_profile(const ProfilePoints& points, const BasisSystem& basis, const SmoothingOptions& options) {
  const int J = basis.size();
  const std::size_t n = points.q.size();
  if (n == 0 || n != points.h.size()) throw Error(ErrorKind::BadConfig, "profile points are empty or ragged");
  for (std::size_t i = 0; i < n; ++i) {
    check_domain(points.q[i], basis.upper());
    if (!std::isfinite(points.h[i])) throw Error(ErrorKind::OutOfDomain, "non-finite profile value");
  }
  if (options.smooth_lambda < 0.0) throw Error(ErrorKind::BadConfig, "smooth_lambda must be >= 0");

  SmoothedProfile out;
  out.coefficients.alpha = Vec::Zero(J);
  const auto [lo, hi] = std::minmax_element(points.h.begin(), points.h.end());
  double mean_h = 0.0;
  for (double v : points.h) mean_h += v;
  mean_h /= static_cast<double>(n);

  if (*hi - *lo < options.constant_tol) {
    out.coefficients.xi0 = mean_h;
    out.coefficients.xi1 = 0.0;
    out.coefficients.constant_flag = true;
    finish(out, basis, points);
    out.objective = out.rmse * out.rmse * static_cast<double>(n);
    out.objective_trace = {out.objective};
    return out;
  }
  if (static_cast<int>(n) < J + 2) {
    throw Error(ErrorKind::BadConfig, "need at least J + 2 profile points for a non-constant fit");
  }

  // With alpha = 0 the transform is m(q) = q, so start from a straight line.
  double mean_q = 0.0;
  for (double q : points.q) mean_q += q;
  mean_q /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (points.q[i] - mean_q) * (points.h[i] - mean_h);
    sxx += (points.q[i] - mean_q) * (points.q[i] - mean_q);
  }
  double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  slope = std::min(slope, -1e-3 * (*hi - *lo) / basis.upper());

  const int P = J + 2;
  Vec theta = Vec::Zero(P);
  theta(1) = std::log(-slope);
  theta(0) = mean_h - slope * mean_q;

  const FitProblem problem{points, basis, options.smooth_lambda};
  Mat penalty = Mat::Zero(P, P);
  penalty.bottomRightCorner(J, J) = options.smooth_lambda * basis.roughness;

  Vec residual;
  double f = problem.objective(theta, &residual);
  out.objective_trace.push_back(f);
  double damping = 0.0;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    const Vec alpha = theta.tail(J);
    MonotoneTransform t(std::span<const double>(alpha.data(), J), basis, true);
    const double xi1 = -std::exp(theta(1));
    Mat jac(n, P);
    for (std::size_t i = 0; i < n; ++i) {
      const double q = points.q[i];
      jac(i, 0) = -1.0;
      jac(i, 1) = -xi1 * t.at(q).m;
      jac.row(i).tail(J) = -xi1 * t.jacobian(q).transpose();
    }
    const Mat A = jac.transpose() * jac + penalty;
    const Vec grad = jac.transpose() * residual + penalty * theta;
    if (grad.norm() <= 1e-14 * (1.0 + f)) {
      converged = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Mat M = A;
      M.diagonal().array() += damping * A.diagonal().array() + 1e-14 * (1.0 + A.diagonal().maxCoeff());
      const Vec delta = M.ldlt().solve(-grad);
      double step = 1.0;
      for (int halving = 0; halving < 30; ++halving, step *= 0.5) {
        const Vec trial = theta + step * delta;
        const double ft = problem.safe_objective(trial);
        if (ft < f) {
          theta = trial;
          const double prev = f;
          f = problem.objective(theta, &residual);
          out.objective_trace.push_back(f);
          accepted = true;
          if (halving == 0) {
            damping = damping > 1e-10 ? damping * 0.1 : 0.0;
          } else if (halving > 4) {
            damping = std::max(damping * 10.0, 1e-6);
          }
          if ((prev - f) <= options.rel_tol * prev || f < 1e-28) converged = true;
          break;
        }
      }
      if (!accepted) {
        if (damping >= 1e8) break;
        damping = std::max(damping * 100.0, 1e-6);
      }
    }
    if (!accepted) {
      // No descent direction left: stationary to working precision.
      converged = true;
      break;
    }
    if (converged) {
      ++it;
      break;
    }
  }

  out.iterations = it;
  out.converged = converged;
  out.objective = f;
  out.coefficients.xi0 = theta(0);
  out.coefficients.xi1 = -std::exp(theta(1));
  out.coefficients.alpha = theta.tail(J);
  finish(out, basis, points);
  return out;
}

double evaluate_profile(const ProfileCoefficients& coeffs, const BasisSystem& basis, double q, int derivative_order) {
  check_domain(q, basis.upper());
  if (derivative_order != 0 && derivative_order != 1) {
    throw Error(ErrorKind::BadConfig, "derivative order must be 0 or 1");
  }
  if (coeffs.constant_flag) return derivative_order == 0 ? coeffs.xi0 : 0.0;
  MonotoneTransform t(std::span<const double>(coeffs.alpha.data(), coeffs.alpha.size()), basis);
  const auto pt = t.at(q);
  return derivative_order == 0 ? coeffs.xi0 + coeffs.xi1 * pt.m : coeffs.xi1 * pt.slope;
}

SmoothedProfile restore_profile(const ProfileCoefficients& coefficients, const BasisSystem& basis, double rmse) {
  if (!coefficients.constant_flag && coefficients.alpha.size() != basis.size()) {
    throw Error(ErrorKind::BasisMismatch, "coefficient count does not match the basis");
  }
  SmoothedProfile out;
  out.coefficients = coefficients;
  if (out.coefficients.alpha.size() != basis.size()) out.coefficients.alpha = Vec::Zero(basis.size());
  fill_curves(out, basis);
  out.rmse = rmse;
  return out;
}

}  // namespace bdz
