#pragma once

#include <span>
#include <vector>

#include "bdz/diversity.hpp"
#include "bdz/types.hpp"

namespace bdz {

/// Clamped B-spline basis with equally spaced interior knots on [0, Q].
class BSplineBasis {
 public:
  BSplineBasis(int count, double upper, int degree);

  int size() const { return count_; }
  int degree() const { return degree_; }
  double upper() const { return upper_; }
  const std::vector<double>& knots() const { return knots_; }
  int interior_knots() const { return count_ - degree_ - 1; }

  /// Fills derivatives 0..order of all basis functions at q. Row r of `out`
  /// holds the r-th derivative; out has (order + 1) rows and size() columns.
  void evaluate(double q, int order, Mat& out) const;
  Vec values(double q) const;

 private:
  int find_span(double q) const;

  int count_;
  int degree_;
  double upper_;
  std::vector<double> knots_;
};

/// The spline basis plus the quadrature grid and precomputed tables used by
/// the monotone transform and the roughness penalty.
struct BasisSystem {
  BSplineBasis spline;
  std::vector<double> nodes;  // uniform quadrature grid on [0, Q]
  double step = 0.0;
  Mat phi;        // nodes x J basis values
  Mat dphi;       // nodes x J first derivatives
  Mat Phi;        // nodes x J antiderivatives from 0
  Mat roughness;  // J x J, integral of phi_j'' phi_k''

  int size() const { return spline.size(); }
  double upper() const { return spline.upper(); }
  bool same_grid(const BasisSystem& other) const;
};

/// Builds the basis. Throws BadConfig unless count >= degree + 1 and the
/// quadrature grid has at least 200 points.
BasisSystem build_basis(int count, double upper, int degree = 3, int quadrature_points = 501);

/// Sum of alpha_j phi_j(q). Throws OutOfDomain outside [0, Q].
double evaluate_unconstrained(std::span<const double> alpha, const BasisSystem& basis, double q);

/// The increasing map m(q) = int_0^q exp(int_0^t w(u) du) dt for the
/// unconstrained function w = sum alpha_j phi_j. Both integrals use the
/// endpoint-corrected trapezoid rule on the basis grid, so m is exact for
/// cubic integrands and fourth-order accurate otherwise.
class MonotoneTransform {
 public:
  /// Throws Overflow when the inner exponential leaves the representable range.
  MonotoneTransform(std::span<const double> alpha, const BasisSystem& basis, bool with_jacobian = false);

  struct Point {
    double m = 0.0;      // m(q)
    double slope = 0.0;  // m'(q) = exp(W(q))
    double w = 0.0;      // unconstrained function at q
  };

  Point at(double q) const;
  /// d m(q) / d alpha, requires with_jacobian.
  Vec jacobian(double q) const;

  const Vec& m_nodes() const { return m_; }
  const Vec& slope_nodes() const { return e_; }
  const Vec& w_nodes() const { return w_; }

 private:
  int locate(double q) const;

  const BasisSystem* basis_;
  Vec alpha_;
  Vec w_;      // unconstrained function
  Vec big_w_;  // its integral
  Vec e_;      // exp of the integral
  Vec m_;
  Mat g_;  // jacobian at nodes, nodes x J
};

MonotoneTransform integrate_transform(std::span<const double> alpha, const BasisSystem& basis);

struct ProfileCoefficients {
  double xi0 = 0.0;
  double xi1 = 0.0;  // <= 0
  Vec alpha;
  int cell_id = -1;
  bool constant_flag = false;

  /// (xi0, xi1, alpha_1..alpha_J), the clustering feature vector.
  Vec beta() const;
};

struct SmoothedProfile {
  ProfileCoefficients coefficients;
  Vec fitted;  // on the basis quadrature nodes
  Vec slope;   // first derivative on the nodes
  double rmse = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = true;
  /// Nodes where the fitted curve is concave beyond 1e-8; reported only.
  int convexity_violations = 0;
};

struct SmoothingOptions {
  double smooth_lambda = 1e-6;
  int max_iter = 500;
  double rel_tol = 1e-13;
  /// Profiles whose range is below this are treated as constant.
  double constant_tol = 1e-6;
};

/// Penalized least-squares fit of H(q) = xi0 + xi1 m(q), xi1 = -exp(eta).
SmoothedProfile fit_profile(const ProfilePoints& points, const BasisSystem& basis,
                            const SmoothingOptions& options = {});

/// Value (order 0) or first derivative (order 1) of a fitted profile.
double evaluate_profile(const ProfileCoefficients& coeffs, const BasisSystem& basis, double q,
                        int derivative_order = 0);

/// Rebuilds the node values of a profile from stored coefficients.
SmoothedProfile restore_profile(const ProfileCoefficients& coefficients, const BasisSystem& basis, double rmse = 0.0);

}  // namespace bdz
