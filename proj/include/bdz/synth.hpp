#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdz/census.hpp"
#include "bdz/types.hpp"

namespace bdz {

/// Species proportions used to draw the counts of one cluster's cells.
struct SpeciesPool {
  std::vector<std::string> species;
  std::vector<double> weights;  // normalized on use
};

enum class LabelLayout { Blocks, Omega };

struct SyntheticScenario {
  GridSpec spec{0.0, 0.0, 20.0, 10, 14};
  int K = 3;
  LabelLayout layout = LabelLayout::Blocks;
  /// (K-1) x L log-odds coefficients on the grid's spatial basis; used by
  /// the Omega layout only.
  Mat omega;
  /// Coefficient-space Gaussians, one per cluster.
  std::vector<Vec> means;
  std::vector<Mat> covariances;
  /// One pool per cluster and the per-cell total range.
  std::vector<SpeciesPool> pools;
  long long min_total = 80;
  long long max_total = 160;
  std::uint64_t seed = 1;

  /// 10 x 14 grid, three bands along the longer axis, even / dominant /
  /// geometric pools, and coefficient means 4 sigma apart.
  static SyntheticScenario standard(std::uint64_t seed = 1, int dim = 17, double sigma = 1.0);
  void validate() const;
};

struct SimulatedLabels {
  std::vector<int> labels;
  Mat priors;  // N x K
};

/// Cluster index of each cell for the block layout: K equal bands along the
/// longer grid axis.
std::vector<int> block_labels(const GridSpec& spec, int K);

SimulatedLabels simulate_labels(const SyntheticScenario& scenario);
Mat simulate_coefficients(const std::vector<int>& labels, const SyntheticScenario& scenario);
AbundanceGrid simulate_abundances(const std::vector<int>& labels, const std::vector<SpeciesPool>& pools,
                                  const SyntheticScenario& scenario);

/// Hubert-Arabie adjusted Rand index. Throws LengthMismatch.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace bdz
