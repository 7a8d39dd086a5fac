#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bdz/census.hpp"
#include "bdz/diversity.hpp"
#include "bdz/io.hpp"
#include "bdz/pfc.hpp"
#include "bdz/selection.hpp"
#include "bdz/smoothing.hpp"
#include "bdz/spatial_basis.hpp"
#include "bdz/variogram.hpp"

namespace bdz {

/// Every tunable of a run. Loaded from JSON; unknown keys are rejected.
struct RunConfig {
  // census input
  std::string census;           // primary stem file
  std::string fallback_census;  // optional, merged inside the mask
  std::string mask;             // optional (x_index, y_index) CSV
  ColumnMap columns;
  double min_dbh = 5.0;
  bool strict = true;

  std::string out_dir = ".";
  GridSpec grid;

  double q_max = 5.0;
  int q_points = 101;
  int basis_count = 15;
  int degree = 3;
  int quadrature_points = 501;
  double smooth_lambda = 1e-6;

  std::optional<double> lag_width;
  std::optional<int> lag_bins;

  int L = 16;
  std::optional<double> explained_target;

  // single fit
  int K = 4;
  FitConfig fit;
  SearchGrid search;

  bool emit_svg = true;
  unsigned threads = 1;

  QGrid qgrid() const { return QGrid::uniform(q_max, q_points); }
  BasisSystem basis() const { return build_basis(basis_count, q_max, degree, quadrature_points); }
  SmoothingOptions smoothing() const {
    SmoothingOptions o;
    o.smooth_lambda = smooth_lambda;
    return o;
  }
};

/// Applies the keys present in `j` on top of `config`. Throws BadConfig.
void apply_config_json(RunConfig& config, const io::Json& j);
io::Json config_to_json(const RunConfig& config);

struct IngestReport {
  std::size_t primary_records = 0;
  std::size_t fallback_records = 0;
  std::size_t merged_records = 0;
  std::size_t alive_stems = 0;
  std::size_t trees = 0;
  std::size_t species = 0;
  std::size_t masked_cells = 0;
  std::size_t warnings = 0;
  AbundanceGrid abundance;
};

/// Parse, merge (when a fallback census is configured), filter and bin.
/// Without an explicit mask the fallback fills cells the primary census
/// does not cover.
IngestReport run_ingest(const RunConfig& config);

/// Hill profiles of every non-empty cell.
io::CellProfiles compute_profiles(const AbundanceGrid& abundance, const QGrid& grid);

/// Smooths each profile; cell ids are carried over.
std::vector<SmoothedProfile> smooth_profiles(const io::CellProfiles& profiles, const BasisSystem& basis,
                                             const SmoothingOptions& options, unsigned threads);

std::vector<Point2> centroids(const GridSpec& spec, const std::vector<int>& cell_ids);
std::vector<int> cell_ids_of(const std::vector<SmoothedProfile>& profiles);

EmpiricalVariogram compute_variogram(const std::vector<SmoothedProfile>& profiles, const GridSpec& spec,
                                     const BasisSystem& basis, std::optional<double> width, std::optional<int> bins);

/// Bending-energy basis over the centroids of the listed cells.
SpatialBasis compute_spatial_basis(const GridSpec& spec, const std::vector<int>& cell_ids, int L,
                                   std::optional<double> explained_target = std::nullopt);

/// N x (J + 2) matrix of (xi0, xi1, alpha) rows.
Mat coefficient_matrix(const std::vector<SmoothedProfile>& profiles);

/// Reorders clusters by decreasing size (ties by mean xi0) so labels are
/// stable across runs; tau, labels and omega follow.
FittedModel canonical_order(const FittedModel& model, const Mat& betas, const Mat& psi);

/// Cluster mean profiles on the q grid: the average fitted curve of the
/// member cells. Rows are clusters.
Mat cluster_mean_profiles(const std::vector<SmoothedProfile>& profiles, const std::vector<int>& labels, int K,
                          const BasisSystem& basis, const QGrid& grid);

}  // namespace bdz
