#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bdz/pfc.hpp"

namespace bdz {

/// One row of the score table.
struct ScoreRecord {
  int K = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double loglik = 0.0;  // unpenalized, at the penalized estimate
  long long C = 0;
  double bic = 0.0;
  double icl = 0.0;
  double entropy_term = 0.0;  // sum tau log tau, <= 0
  int iterations = 0;
  bool converged = false;
  bool ok = false;
  std::string error;  // set when the fit failed
};

constexpr double kNonzeroTol = 1e-8;

/// Nonzero means + nonzero upper-triangle (with diagonal) covariance
/// entries + L (K - 1) mixing coefficients.
long long complexity(const FittedModel& model, int L);
double bic(const FittedModel& model, int L, int N);
/// sum tau log tau with 0 log 0 = 0.
double posterior_entropy_term(const Mat& tau);
double icl(const FittedModel& model, int L, int N);

ScoreRecord score(const FittedModel& model, int L, int N);

struct GridSearchResult {
  std::vector<ScoreRecord> table;  // in (K, lambda1, lambda2) grid order
  std::vector<FittedModel> models;  // parallel to table; empty model if the fit failed
  std::optional<std::size_t> best_bic;
  std::optional<std::size_t> best_icl;
  std::vector<std::size_t> rank_bic;  // indices of ok records, best first
  std::vector<std::size_t> rank_icl;
};

struct SearchGrid {
  std::vector<int> K{2, 3, 4, 5, 6};
  std::vector<double> lambda1 = log_spaced(1e-3, 10.0, 5);
  std::vector<double> lambda2 = log_spaced(1e-3, 10.0, 5);

  static std::vector<double> log_spaced(double lo, double hi, int n);
};

/// Fits every (K, lambda1, lambda2) triplet with the same seed. Failed fits
/// are recorded in the table rather than thrown.
GridSearchResult grid_search(const Mat& betas, const Mat& psi, const SearchGrid& grid, const FitConfig& config);

}  // namespace bdz
