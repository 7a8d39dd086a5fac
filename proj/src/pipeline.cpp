#include "bdz/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "bdz/error.hpp"
#include "bdz/parallel.hpp"

namespace bdz {

namespace {

template <class T>
void take(const io::Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void take_optional(const io::Json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

void reject_unknown(const io::Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::BadConfig, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw Error(ErrorKind::BadConfig, "unknown config key " + where + key);
    }
  }
}

}  // namespace

void apply_config_json(RunConfig& c, const io::Json& j) {
  try {
    reject_unknown(j,
                   {"census", "fallback_census", "mask", "columns", "min_dbh", "strict", "out_dir", "grid", "q_max",
                    "q_points", "basis_count", "degree", "quadrature_points", "smooth_lambda", "lag_width", "lag_bins",
                    "L", "explained_target", "K", "fit", "search", "emit_svg", "threads"},
                   "");
    take(j, "census", c.census);
    take(j, "fallback_census", c.fallback_census);
    take(j, "mask", c.mask);
    if (j.contains("columns")) {
      const auto& m = j.at("columns");
      reject_unknown(m, {"stem_id", "tree_id", "species", "x", "y", "dbh", "status"}, "columns.");
      take(m, "stem_id", c.columns.stem_id);
      take(m, "tree_id", c.columns.tree_id);
      take(m, "species", c.columns.species);
      take(m, "x", c.columns.x);
      take(m, "y", c.columns.y);
      take(m, "dbh", c.columns.dbh);
      take(m, "status", c.columns.status);
    }
    take(j, "min_dbh", c.min_dbh);
    take(j, "strict", c.strict);
    take(j, "out_dir", c.out_dir);
    if (j.contains("grid")) {
      reject_unknown(j.at("grid"), {"origin_x", "origin_y", "cell_size", "nx", "ny"}, "grid.");
      c.grid = io::grid_from_json(j.at("grid"), c.grid);
    }
    take(j, "q_max", c.q_max);
    take(j, "q_points", c.q_points);
    take(j, "basis_count", c.basis_count);
    take(j, "degree", c.degree);
    take(j, "quadrature_points", c.quadrature_points);
    take(j, "smooth_lambda", c.smooth_lambda);
    take_optional(j, "lag_width", c.lag_width);
    take_optional(j, "lag_bins", c.lag_bins);
    take(j, "L", c.L);
    take_optional(j, "explained_target", c.explained_target);
    take(j, "K", c.K);
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      reject_unknown(f,
                     {"lambda1", "lambda2", "max_iter", "rel_tol", "n_init", "kmeans_restarts", "seed", "fix_mixing",
                      "max_reseeds"},
                     "fit.");
      take(f, "lambda1", c.fit.lambda1);
      take(f, "lambda2", c.fit.lambda2);
      take(f, "max_iter", c.fit.max_iter);
      take(f, "rel_tol", c.fit.rel_tol);
      take(f, "n_init", c.fit.n_init);
      take(f, "kmeans_restarts", c.fit.kmeans_restarts);
      take(f, "seed", c.fit.seed);
      take(f, "fix_mixing", c.fit.fix_mixing);
      take(f, "max_reseeds", c.fit.max_reseeds);
    }
    if (j.contains("search")) {
      const auto& s = j.at("search");
      reject_unknown(s, {"K", "lambda1", "lambda2"}, "search.");
      take(s, "K", c.search.K);
      take(s, "lambda1", c.search.lambda1);
      take(s, "lambda2", c.search.lambda2);
    }
    take(j, "emit_svg", c.emit_svg);
    take(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
}

io::Json config_to_json(const RunConfig& c) {
  io::Json j;
  j["census"] = c.census;
  j["fallback_census"] = c.fallback_census;
  j["mask"] = c.mask;
  j["columns"] = {{"stem_id", c.columns.stem_id}, {"tree_id", c.columns.tree_id}, {"species", c.columns.species},
                  {"x", c.columns.x},             {"y", c.columns.y},             {"dbh", c.columns.dbh},
                  {"status", c.columns.status}};
  j["min_dbh"] = c.min_dbh;
  j["strict"] = c.strict;
  j["grid"] = io::grid_to_json(c.grid);
  j["q_max"] = c.q_max;
  j["q_points"] = c.q_points;
  j["basis_count"] = c.basis_count;
  j["degree"] = c.degree;
  j["quadrature_points"] = c.quadrature_points;
  j["smooth_lambda"] = c.smooth_lambda;
  j["lag_width"] = c.lag_width ? io::Json(*c.lag_width) : io::Json(nullptr);
  j["lag_bins"] = c.lag_bins ? io::Json(*c.lag_bins) : io::Json(nullptr);
  j["L"] = c.L;
  j["explained_target"] = c.explained_target ? io::Json(*c.explained_target) : io::Json(nullptr);
  j["K"] = c.K;
  j["fit"] = {{"lambda1", c.fit.lambda1},
              {"lambda2", c.fit.lambda2},
              {"max_iter", c.fit.max_iter},
              {"rel_tol", c.fit.rel_tol},
              {"n_init", c.fit.n_init},
              {"kmeans_restarts", c.fit.kmeans_restarts},
              {"seed", c.fit.seed},
              {"fix_mixing", c.fit.fix_mixing},
              {"max_reseeds", c.fit.max_reseeds}};
  j["search"] = {{"K", c.search.K}, {"lambda1", c.search.lambda1}, {"lambda2", c.search.lambda2}};
  j["emit_svg"] = c.emit_svg;
  return j;
}

IngestReport run_ingest(const RunConfig& config) {
  if (config.census.empty()) throw Error(ErrorKind::BadConfig, "no census file configured");
  config.grid.validate();
  ParseOptions opts;
  opts.columns = config.columns;
  opts.strict = config.strict;
  IngestReport report;
  ParseResult primary = parse_stem_records_file(config.census, opts);
  report.primary_records = primary.records.size();
  report.warnings = primary.warnings.size();
  std::vector<StemRecord> merged;
  if (!config.fallback_census.empty()) {
    ParseResult fallback = parse_stem_records_file(config.fallback_census, opts);
    report.warnings += fallback.warnings.size();
    RegionMask mask = [&] {
      if (config.mask.empty()) return RegionMask::uncovered(primary.records, config.grid);
      auto in = io::open_in(config.mask);
      return RegionMask::read_csv(in, config.grid);
    }();
    report.masked_cells = mask.size();
    merged = merge_censuses(primary.records, fallback.records, mask);
    report.fallback_records = merged.size() - primary.records.size();
  } else {
    merged = std::move(primary.records);
  }
  report.merged_records = merged.size();
  const auto stems = filter_alive_stems(merged, config.min_dbh);
  report.alive_stems = stems.size();
  const auto trees = collapse_to_trees(stems);
  report.trees = trees.size();
  report.abundance = bin_to_grid(trees, config.grid);
  report.species = report.abundance.species_totals().size();
  return report;
}

io::CellProfiles compute_profiles(const AbundanceGrid& abundance, const QGrid& grid) {
  grid.validate();
  io::CellProfiles out;
  for (int c = 0; c < static_cast<int>(abundance.counts.size()); ++c) {
    if (abundance.counts[c].empty()) continue;
    out.cell_ids.push_back(c);
    out.points.push_back(profile_points(RelativeAbundance::from_counts(abundance.counts[c]), grid));
  }
  return out;
}

std::vector<SmoothedProfile> smooth_profiles(const io::CellProfiles& profiles, const BasisSystem& basis,
                                             const SmoothingOptions& options, unsigned threads) {
  std::vector<SmoothedProfile> out(profiles.cell_ids.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i] = fit_profile(profiles.points[i], basis, options);
    out[i].coefficients.cell_id = profiles.cell_ids[i];
  });
  return out;
}

std::vector<Point2> centroids(const GridSpec& spec, const std::vector<int>& cell_ids) {
  std::vector<Point2> out;
  out.reserve(cell_ids.size());
  for (int c : cell_ids) {
    if (c < 0 || c >= spec.cells()) throw Error(ErrorKind::OutOfBounds, "cell " + std::to_string(c) + " is off the grid");
    out.push_back(spec.centroid(c));
  }
  return out;
}

std::vector<int> cell_ids_of(const std::vector<SmoothedProfile>& profiles) {
  std::vector<int> ids;
  for (const auto& p : profiles) ids.push_back(p.coefficients.cell_id);
  return ids;
}

EmpiricalVariogram compute_variogram(const std::vector<SmoothedProfile>& profiles, const GridSpec& spec,
                                     const BasisSystem& basis, std::optional<double> width, std::optional<int> bins) {
  const auto pts = centroids(spec, cell_ids_of(profiles));
  double maxd = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t r = i + 1; r < pts.size(); ++r) {
      maxd = std::max(maxd, std::hypot(pts[i].first - pts[r].first, pts[i].second - pts[r].second));
    }
  }
  LagSpec lags = LagSpec::standard(width.value_or(spec.cell_size), maxd);
  if (bins) lags.bins = *bins;
  return trace_variogram(profiles, pts, basis, lags);
}

SpatialBasis compute_spatial_basis(const GridSpec& spec, const std::vector<int>& cell_ids, int L,
                                   std::optional<double> explained_target) {
  const auto pts = centroids(spec, cell_ids);
  Mat coords(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    coords(i, 0) = pts[i].first;
    coords(i, 1) = pts[i].second;
  }
  const SiteSet sites(std::move(coords));
  const Mat U = sites.design();
  const Mat B = bending_energy(tps_variogram_matrix(sites), U);
  if (explained_target) return kl_basis_for_fraction(B, U, *explained_target);
  return kl_basis(B, U, L);
}

Mat coefficient_matrix(const std::vector<SmoothedProfile>& profiles) {
  if (profiles.empty()) return Mat(0, 0);
  const Eigen::Index p = profiles.front().coefficients.beta().size();
  Mat out(static_cast<Eigen::Index>(profiles.size()), p);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const Vec b = profiles[i].coefficients.beta();
    if (b.size() != p) throw Error(ErrorKind::BasisMismatch, "profiles use different basis sizes");
    out.row(static_cast<Eigen::Index>(i)) = b.transpose();
  }
  return out;
}

FittedModel canonical_order(const FittedModel& model, const Mat& betas, const Mat& psi) {
  const int K = model.params.K();
  std::vector<int> size(K, 0);
  for (int l : model.labels) ++size[l];
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (size[a] != size[b]) return size[a] > size[b];
    return model.params.mu[a](0) > model.params.mu[b](0);
  });
  FittedModel out = model;
  out.params = model.params.permuted(order);
  out.tau = e_step(out.params, betas, psi);
  out.labels = hard_assignment(out.tau);
  return out;
}

Mat cluster_mean_profiles(const std::vector<SmoothedProfile>& profiles, const std::vector<int>& labels, int K,
                          const BasisSystem& basis, const QGrid& grid) {
  if (profiles.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "one label per profile required");
  Mat sums = Mat::Zero(K, static_cast<Eigen::Index>(grid.q.size()));
  std::vector<int> counts(K, 0);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int k = labels[i];
    ++counts[k];
    for (std::size_t r = 0; r < grid.q.size(); ++r) {
      sums(k, static_cast<Eigen::Index>(r)) += evaluate_profile(profiles[i].coefficients, basis, grid.q[r]);
    }
  }
  for (int k = 0; k < K; ++k) {
    if (counts[k] > 0) {
      sums.row(k) /= counts[k];
    } else {
      sums.row(k).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return sums;
}

}  // namespace bdz
