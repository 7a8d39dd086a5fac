#include "bdz/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bdz/error.hpp"
#include "bdz/parallel.hpp"

namespace bdz {

std::vector<double> SearchGrid::log_spaced(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0.0) || !(hi >= lo)) throw Error(ErrorKind::BadConfig, "log_spaced needs 0 < lo <= hi and n >= 1");
  std::vector<double> out;
  if (n == 1) return {lo};
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < n; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (n - 1)));
  return out;
}

long long complexity(const FittedModel& model, int L) {
  const ModelParams& m = model.params;
  long long c = 0;
  for (int k = 0; k < m.K(); ++k) {
    c += (m.mu[k].array().abs() > kNonzeroTol).count();
    const Mat& s = m.covariance(k);
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
      for (Eigen::Index q = j; q < s.cols(); ++q) {
        if (std::abs(s(j, q)) > kNonzeroTol) ++c;
      }
    }
  }
  return c + static_cast<long long>(L) * (m.K() - 1);
}

double bic(const FittedModel& model, int L, int N) {
  return model.loglik - 0.5 * static_cast<double>(complexity(model, L)) * std::log(static_cast<double>(N));
}

double posterior_entropy_term(const Mat& tau) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    const double t = tau.data()[i];
    if (t > 0.0) s += t * std::log(t);
  }
  return s;
}

double icl(const FittedModel& model, int L, int N) { return bic(model, L, N) + posterior_entropy_term(model.tau); }

ScoreRecord score(const FittedModel& model, int L, int N) {
  ScoreRecord r;
  r.K = model.params.K();
  r.lambda1 = model.lambda1;
  r.lambda2 = model.lambda2;
  r.loglik = model.loglik;
  r.C = complexity(model, L);
  r.bic = model.loglik - 0.5 * static_cast<double>(r.C) * std::log(static_cast<double>(N));
  r.entropy_term = std::min(0.0, posterior_entropy_term(model.tau));
  r.icl = r.bic + r.entropy_term;
  r.iterations = model.iterations;
  r.converged = model.converged;
  r.ok = true;
  return r;
}

GridSearchResult grid_search(const Mat& betas, const Mat& psi, const SearchGrid& grid, const FitConfig& config) {
  if (grid.K.empty() || grid.lambda1.empty() || grid.lambda2.empty()) {
    throw Error(ErrorKind::BadConfig, "search grids must be non-empty");
  }
  struct Triplet {
    int K;
    double l1, l2;
  };
  std::vector<Triplet> triplets;
  for (int K : grid.K) {
    for (double l1 : grid.lambda1) {
      for (double l2 : grid.lambda2) triplets.push_back({K, l1, l2});
    }
  }
  GridSearchResult out;
  out.table.resize(triplets.size());
  out.models.resize(triplets.size());
  const int L = static_cast<int>(psi.cols());
  const int N = static_cast<int>(betas.rows());
  // Restarts run serially inside each fit; the threads go to the triplets.
  FitConfig inner = config;
  inner.threads = 1;
  inner.observer = nullptr;
  parallel_for(triplets.size(), config.threads, [&](std::size_t t) {
    const Triplet& tr = triplets[t];
    FitConfig c = inner;
    c.lambda1 = tr.l1;
    c.lambda2 = tr.l2;
    ScoreRecord rec;
    rec.K = tr.K;
    rec.lambda1 = tr.l1;
    rec.lambda2 = tr.l2;
    try {
      FittedModel m = fit_em(betas, psi, tr.K, c);
      rec = score(m, L, N);
      out.models[t] = std::move(m);
    } catch (const Error& e) {
      rec.error = std::string(e.name()) + ": " + e.what();
    }
    out.table[t] = rec;
  });
  auto rank = [&](auto key) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.table.size(); ++i) {
      if (out.table[i].ok) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return key(out.table[a]) > key(out.table[b]); });
    return idx;
  };
  out.rank_bic = rank([](const ScoreRecord& r) { return r.bic; });
  out.rank_icl = rank([](const ScoreRecord& r) { return r.icl; });
  if (!out.rank_bic.empty()) out.best_bic = out.rank_bic.front();
  if (!out.rank_icl.empty()) out.best_icl = out.rank_icl.front();
  return out;
}

}  // namespace bdz
