#include "bdz/diversity.hpp"

#include <cmath>
#include <numeric>

#include "bdz/error.hpp"

namespace bdz {

RelativeAbundance::RelativeAbundance(std::vector<double> proportions) : p_(std::move(proportions)) {
  if (p_.empty()) throw Error(ErrorKind::EmptyCell, "relative abundance needs at least one species");
  double sum = 0.0;
  for (double v : p_) {
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorKind::OutOfDomain, "proportions must lie in (0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorKind::OutOfDomain, "proportions must sum to one");
}

RelativeAbundance RelativeAbundance::from_counts(const std::map<std::string, long long>& counts) {
  std::vector<double> c;
  c.reserve(counts.size());
  for (const auto& [sp, n] : counts) c.push_back(static_cast<double>(n));
  return from_counts(c);
}

RelativeAbundance RelativeAbundance::from_counts(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw Error(ErrorKind::OutOfDomain, "negative abundance");
    total += c;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::EmptyCell, "cell holds no individuals");
  std::vector<double> p;
  for (double c : counts) {
    if (c > 0.0) p.push_back(c / total);
  }
  // Renormalize so the sum is exact to rounding regardless of S.
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
  return RelativeAbundance(std::move(p));
}

QGrid QGrid::uniform(double Q, int n) {
  if (!(Q >= 1.0) || n < 2) throw Error(ErrorKind::BadConfig, "q-grid needs Q >= 1 and at least 2 points");
  QGrid g;
  g.upper = Q;
  g.q.resize(n);
  for (int i = 0; i < n; ++i) g.q[i] = Q * i / (n - 1);
  g.q.back() = Q;
  g.validate();
  return g;
}

void QGrid::validate() const {
  if (q.empty() || q.front() != 0.0) throw Error(ErrorKind::BadConfig, "q-grid must start at 0");
  bool has_one = false;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i > 0 && !(q[i] > q[i - 1])) throw Error(ErrorKind::BadConfig, "q-grid must be strictly increasing");
    if (std::abs(q[i] - 1.0) < 1e-12) has_one = true;
  }
  if (!has_one) throw Error(ErrorKind::BadConfig, "q-grid must contain q = 1");
  if (q.back() > upper + 1e-12) throw Error(ErrorKind::BadConfig, "q-grid exceeds its upper bound");
}

double shannon_entropy(const RelativeAbundance& p) {
  double h = 0.0;
  for (double v : p.values()) h -= v * std::log(v);
  return h;
}

double gini_simpson(const RelativeAbundance& p) {
  double s = 0.0;
  for (double v : p.values()) s += v * v;
  return 1.0 - s;
}

double hill_number(const RelativeAbundance& p, double q) {
  if (!std::isfinite(q) || q < 0.0) throw Error(ErrorKind::OutOfDomain, "Hill order must be finite and >= 0");
  if (q == 0.0) return static_cast<double>(p.richness());
  if (std::abs(q - 1.0) < kShannonWindow) return std::exp(shannon_entropy(p));
  // log(sum p^q) = log1p(sum p * expm1((q-1) log p)), accurate near q = 1.
  double acc = 0.0;
  for (double v : p.values()) acc += v * std::expm1((q - 1.0) * std::log(v));
  return std::exp(std::log1p(acc) / (1.0 - q));
}

ProfilePoints profile_points(const RelativeAbundance& p, const QGrid& grid) {
  ProfilePoints out;
  out.q = grid.q;
  out.h.reserve(grid.q.size());
  for (double q : grid.q) out.h.push_back(hill_number(p, q));
  return out;
}

}  // namespace bdz
