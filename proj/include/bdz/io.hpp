#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "bdz/census.hpp"
#include "bdz/diversity.hpp"
#include "bdz/pfc.hpp"
#include "bdz/selection.hpp"
#include "bdz/smoothing.hpp"
#include "bdz/spatial_basis.hpp"
#include "bdz/synth.hpp"
#include "bdz/variogram.hpp"

#include <json.hpp>

namespace bdz::io {

using Json = nlohmann::ordered_json;

/// Profiles of the non-empty cells, in cell order.
struct CellProfiles {
  std::vector<int> cell_ids;
  std::vector<ProfilePoints> points;
};

/// Basis rows for a list of cells.
struct CellBasis {
  std::vector<int> cell_ids;
  Mat psi;
};

// Abundance CSV: cell_id, x_index, y_index, species, count.
void write_abundance(std::ostream& out, const AbundanceGrid& grid);
AbundanceGrid read_abundance(std::istream& in, const GridSpec& spec);

// Profile points CSV: cell_id, q, H.
void write_profiles(std::ostream& out, const CellProfiles& profiles);
CellProfiles read_profiles(std::istream& in);

// Coefficients CSV: cell_id, xi0, xi1, alpha_1..alpha_J, constant_flag, rmse.
void write_coefficients(std::ostream& out, const std::vector<SmoothedProfile>& profiles);
std::vector<SmoothedProfile> read_coefficients(std::istream& in, const BasisSystem& basis);

// Fitted curves CSV: cell_id, q, H_fit.
void write_fitted(std::ostream& out, const std::vector<SmoothedProfile>& profiles, const BasisSystem& basis,
                  const QGrid& grid);

// Variogram CSV: lag_center, gamma_hat, pair_count; gamma_hat is NA for empty bins.
void write_variogram(std::ostream& out, const EmpiricalVariogram& v);

// Basis CSV: cell_id, psi_1..psi_L. Eigenvalue CSV: index, eigenvalue.
void write_basis(std::ostream& out, const std::vector<int>& cell_ids, const Mat& psi);
CellBasis read_basis(std::istream& in);
void write_eigenvalues(std::ostream& out, const Vec& eigenvalues);

// Score table CSV.
void write_scores(std::ostream& out, const std::vector<ScoreRecord>& table);

// Assignments CSV: cell_id, label, tau_1..tau_K, pi_1..pi_K. Labels are 1-based.
void write_assignments(std::ostream& out, const std::vector<int>& cell_ids, const FittedModel& model, const Mat& psi);

// Labels CSV: cell_id, label (1-based).
void write_labels(std::ostream& out, const std::vector<int>& cell_ids, const std::vector<int>& labels);
std::vector<std::pair<int, int>> read_labels(std::istream& in);

Json model_to_json(const FittedModel& model);
FittedModel model_from_json(const Json& j);

Json grid_to_json(const GridSpec& spec);
GridSpec grid_from_json(const Json& j, GridSpec defaults = {});

Json scenario_to_json(const SyntheticScenario& s);
SyntheticScenario scenario_from_json(const Json& j);

/// Opens for writing or throws IOError.
std::ofstream open_out(const std::string& path);
std::ifstream open_in(const std::string& path);
void write_text(const std::string& path, const std::string& text);
Json read_json(const std::string& path);

}  // namespace bdz::io
