#include "bdz/synth.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "bdz/error.hpp"
#include "bdz/mlogit.hpp"
#include "bdz/rng.hpp"
#include "bdz/spatial_basis.hpp"

namespace bdz {

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::BadConfig, "below(0)");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double CounterRng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::gamma(double shape) {
  if (!(shape > 0.0)) throw Error(ErrorKind::BadConfig, "gamma shape must be positive");
  if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform_open(), 1.0 / shape);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

namespace {

SpeciesPool make_pool(std::vector<double> weights) {
  SpeciesPool pool;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    char name[16];
    std::snprintf(name, sizeof name, "sp%02zu", s + 1);
    pool.species.emplace_back(name);
  }
  pool.weights = std::move(weights);
  return pool;
}

}  // namespace

SyntheticScenario SyntheticScenario::standard(std::uint64_t seed, int dim, double sigma) {
  SyntheticScenario s;
  s.seed = seed;
  for (int k = 0; k < s.K; ++k) {
    Vec mu = Vec::Zero(dim);
    for (int j = k; j < dim; j += s.K) mu(j) = 4.0 * sigma;
    s.means.push_back(mu);
    s.covariances.push_back(sigma * sigma * Mat::Identity(dim, dim));
  }
  s.pools = {make_pool({1, 1, 1, 1, 1, 1}), make_pool({0.85, 0.03, 0.03, 0.03, 0.03, 0.03}),
             make_pool({0.4, 0.3, 0.2, 0.1})};
  return s;
}

void SyntheticScenario::validate() const {
  spec.validate();
  if (K < 1 || K > spec.cells()) throw Error(ErrorKind::BadK, "K must lie in [1, cells]");
  if (layout == LabelLayout::Omega && omega.rows() != K - 1) {
    throw Error(ErrorKind::BadConfig, "omega must have K - 1 rows");
  }
  if (!means.empty() || !covariances.empty()) {
    if (static_cast<int>(means.size()) != K || covariances.size() != means.size()) {
      throw Error(ErrorKind::BadConfig, "need one mean and covariance per cluster");
    }
    for (int k = 0; k < K; ++k) {
      const auto p = means[k].size();
      if (covariances[k].rows() != p || covariances[k].cols() != p || means[0].size() != p) {
        throw Error(ErrorKind::BadConfig, "coefficient dimensions disagree");
      }
      Eigen::LLT<Mat> llt(covariances[k]);
      if (llt.info() != Eigen::Success) throw Error(ErrorKind::NonPD, "scenario covariance is not positive definite");
    }
  }
  if (!pools.empty() && static_cast<int>(pools.size()) != K) throw Error(ErrorKind::BadConfig, "need one pool per cluster");
  for (const auto& pool : pools) {
    if (pool.species.empty() || pool.species.size() != pool.weights.size()) {
      throw Error(ErrorKind::BadConfig, "species pool names and weights disagree");
    }
    double total = 0.0;
    for (double w : pool.weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::BadConfig, "pool weights must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::BadConfig, "pool weights sum to zero");
  }
  if (min_total < 1 || max_total < min_total) throw Error(ErrorKind::BadConfig, "bad per-cell total range");
}

std::vector<int> block_labels(const GridSpec& spec, int K) {
  std::vector<int> labels(spec.cells());
  const bool along_y = spec.ny >= spec.nx;
  const int len = along_y ? spec.ny : spec.nx;
  for (int c = 0; c < spec.cells(); ++c) {
    const int pos = along_y ? spec.y_index(c) : spec.x_index(c);
    labels[c] = static_cast<int>(static_cast<long long>(pos) * K / len);
  }
  return labels;
}

SimulatedLabels simulate_labels(const SyntheticScenario& scenario) {
  scenario.validate();
  const int N = scenario.spec.cells();
  SimulatedLabels out;
  if (scenario.layout == LabelLayout::Blocks) {
    out.labels = block_labels(scenario.spec, scenario.K);
    out.priors = Mat::Zero(N, scenario.K);
    for (int i = 0; i < N; ++i) out.priors(i, out.labels[i]) = 1.0;
    return out;
  }
  const SpatialBasis basis = grid_spatial_basis(scenario.spec, static_cast<int>(scenario.omega.cols()));
  out.priors = log_mixing_matrix(scenario.omega, basis.psi).array().exp();
  CounterRng rng = CounterRng(scenario.seed).split(1);
  out.labels.resize(N);
  for (int i = 0; i < N; ++i) {
    double u = rng.uniform();
    int k = 0;
    for (; k < scenario.K - 1; ++k) {
      u -= out.priors(i, k);
      if (u < 0.0) break;
    }
    out.labels[i] = k;
  }
  return out;
}

Mat simulate_coefficients(const std::vector<int>& labels, const SyntheticScenario& scenario) {
  scenario.validate();
  if (scenario.means.empty()) throw Error(ErrorKind::BadConfig, "scenario has no coefficient distributions");
  const auto p = scenario.means[0].size();
  std::vector<Mat> factors;
  for (const auto& c : scenario.covariances) factors.push_back(Eigen::LLT<Mat>(c).matrixL());
  CounterRng rng = CounterRng(scenario.seed).split(2);
  Mat out(labels.size(), p);
  Vec z(p);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= scenario.K) throw Error(ErrorKind::BadConfig, "label out of range");
    for (Eigen::Index j = 0; j < p; ++j) z(j) = rng.normal();
    out.row(i) = (scenario.means[k] + factors[k] * z).transpose();
  }
  return out;
}

AbundanceGrid simulate_abundances(const std::vector<int>& labels, const std::vector<SpeciesPool>& pools,
                                  const SyntheticScenario& scenario) {
  scenario.validate();
  if (static_cast<int>(labels.size()) != scenario.spec.cells()) {
    throw Error(ErrorKind::LengthMismatch, "one label per cell required");
  }
  if (static_cast<int>(pools.size()) < scenario.K) throw Error(ErrorKind::BadConfig, "need one pool per cluster");
  AbundanceGrid grid;
  grid.spec = scenario.spec;
  grid.counts.resize(labels.size());
  CounterRng rng = CounterRng(scenario.seed).split(3);
  const auto span = static_cast<std::uint64_t>(scenario.max_total - scenario.min_total + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const SpeciesPool& pool = pools.at(labels[i]);
    std::vector<double> cdf;
    double acc = 0.0;
    for (double w : pool.weights) cdf.push_back(acc += w);
    const long long n = scenario.min_total + static_cast<long long>(rng.below(span));
    for (long long t = 0; t < n; ++t) {
      const double u = rng.uniform() * acc;
      std::size_t s = 0;
      while (s + 1 < cdf.size() && u >= cdf[s]) ++s;
      ++grid.counts[i][pool.species[s]];
    }
  }
  return grid;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "labelings have different lengths");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, c] : table) index += pairs(c);
  for (const auto& [key, c] : rows) sa += pairs(c);
  for (const auto& [key, c] : cols) sb += pairs(c);
  const double expected = sa * sb / pairs(n);
  const double top = 0.5 * (sa + sb);
  if (top == expected) return 1.0;  // both labelings trivial
  return (index - expected) / (top - expected);
}

}  // namespace bdz
