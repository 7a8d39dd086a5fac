// biodiv-zoner: census -> Hill profiles -> smoothed coefficients -> spatial
// mixture zoning, one subcommand per stage.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdz/csv.hpp"
#include "bdz/error.hpp"
#include "bdz/heatmap.hpp"
#include "bdz/io.hpp"
#include "bdz/mlogit.hpp"
#include "bdz/pipeline.hpp"
#include "bdz/synth.hpp"

namespace fs = std::filesystem;
using bdz::Error;
using bdz::ErrorKind;
using bdz::Mat;
using bdz::io::Json;

namespace {

struct Overrides {
  std::optional<std::string> census, fallback, mask, out_dir, abundance, features;
  std::optional<double> min_dbh, cell_size, origin_x, origin_y;
  std::optional<int> nx, ny;
  bool lenient = false;
  std::optional<double> q_max, smooth_lambda, lag_width, explained_target;
  std::optional<int> q_points, basis_count, lag_bins, L;
  std::optional<int> K;
  std::optional<double> lambda1, lambda2;
  std::optional<int> n_init, max_iter;
  std::optional<std::uint64_t> seed;
  bool fix_mixing = false;
  std::vector<int> k_grid;
  std::vector<double> l1_grid, l2_grid;
  std::optional<unsigned> threads;
  bool no_svg = false;
  bool select = false;
  std::optional<std::string> scenario, config;
};

class Stopwatch {
 public:
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timings_[name] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  Json json() const {
    Json j;
    for (const auto& [k, v] : timings_) j[k] = v;
    return j;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::map<std::string, double> timings_;
};

template <class T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

bdz::RunConfig build_config(const Overrides& o) {
  bdz::RunConfig c;
  if (const char* env = std::getenv("BIODIV_ZONER_CONFIG"); env && *env) {
    bdz::apply_config_json(c, bdz::io::read_json(env));
  }
  if (o.config) bdz::apply_config_json(c, bdz::io::read_json(*o.config));
  set_if(o.census, c.census);
  set_if(o.fallback, c.fallback_census);
  set_if(o.mask, c.mask);
  set_if(o.out_dir, c.out_dir);
  set_if(o.min_dbh, c.min_dbh);
  set_if(o.cell_size, c.grid.cell_size);
  set_if(o.origin_x, c.grid.origin_x);
  set_if(o.origin_y, c.grid.origin_y);
  set_if(o.nx, c.grid.nx);
  set_if(o.ny, c.grid.ny);
  if (o.lenient) c.strict = false;
  set_if(o.q_max, c.q_max);
  set_if(o.q_points, c.q_points);
  set_if(o.basis_count, c.basis_count);
  set_if(o.smooth_lambda, c.smooth_lambda);
  if (o.lag_width) c.lag_width = o.lag_width;
  if (o.lag_bins) c.lag_bins = o.lag_bins;
  set_if(o.L, c.L);
  if (o.explained_target) c.explained_target = o.explained_target;
  set_if(o.K, c.K);
  set_if(o.lambda1, c.fit.lambda1);
  set_if(o.lambda2, c.fit.lambda2);
  set_if(o.n_init, c.fit.n_init);
  set_if(o.max_iter, c.fit.max_iter);
  set_if(o.seed, c.fit.seed);
  if (o.fix_mixing) c.fit.fix_mixing = true;
  if (!o.k_grid.empty()) c.search.K = o.k_grid;
  if (!o.l1_grid.empty()) c.search.lambda1 = o.l1_grid;
  if (!o.l2_grid.empty()) c.search.lambda2 = o.l2_grid;
  set_if(o.threads, c.threads);
  if (o.no_svg) c.emit_svg = false;
  c.fit.threads = c.threads;
  c.grid.validate();
  return c;
}

std::string path_in(const bdz::RunConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

bool exists(const bdz::RunConfig& c, const std::string& name) { return fs::exists(path_in(c, name)); }

template <class Fn>
void write_file(const bdz::RunConfig& c, const std::string& name, Fn&& fn) {
  auto out = bdz::io::open_out(path_in(c, name));
  fn(out);
  if (!out) throw Error(ErrorKind::IOError, "write failed: " + path_in(c, name));
}

void write_json(const bdz::RunConfig& c, const std::string& name, const Json& j) {
  bdz::io::write_text(path_in(c, name), j.dump(2) + "\n");
}

/// Grid from a previous ingest/simulate run when present, else the config.
bdz::GridSpec load_grid(const bdz::RunConfig& c) {
  if (exists(c, "grid.json")) return bdz::io::grid_from_json(bdz::io::read_json(path_in(c, "grid.json")), c.grid);
  return c.grid;
}

bdz::AbundanceGrid load_abundance(const bdz::RunConfig& c, const Overrides& o, const bdz::GridSpec& grid) {
  const std::string path = o.abundance.value_or(path_in(c, "abundance.csv"));
  auto in = bdz::io::open_in(path);
  return bdz::io::read_abundance(in, grid);
}

std::vector<std::optional<double>> per_cell(const bdz::GridSpec& grid, const std::vector<int>& ids,
                                            const std::vector<double>& values) {
  std::vector<std::optional<double>> out(grid.cells());
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = values[i];
  return out;
}

/// Upstream state shared by the later stages; anything missing is computed.
struct Workspace {
  bdz::GridSpec grid;
  bdz::BasisSystem basis;
  explicit Workspace(const bdz::RunConfig& c) : grid(load_grid(c)), basis(c.basis()) {}
  std::optional<bdz::io::CellProfiles> points;
  std::optional<std::vector<bdz::SmoothedProfile>> profiles;
};

Workspace open_workspace(const bdz::RunConfig& c) { return Workspace(c); }

const bdz::io::CellProfiles& need_points(Workspace& w, const bdz::RunConfig& c, const Overrides& o, bool compute) {
  if (!w.points) {
    if (exists(c, "profiles.csv")) {
      auto in = bdz::io::open_in(path_in(c, "profiles.csv"));
      w.points = bdz::io::read_profiles(in);
    } else if (compute) {
      w.points = bdz::compute_profiles(load_abundance(c, o, w.grid), c.qgrid());
    } else {
      throw Error(ErrorKind::IOError, "missing " + path_in(c, "profiles.csv") + "; run `profiles` first");
    }
  }
  return *w.points;
}

const std::vector<bdz::SmoothedProfile>& need_profiles(Workspace& w, const bdz::RunConfig& c, const Overrides& o,
                                                       bool compute) {
  if (!w.profiles) {
    if (exists(c, "coefficients.csv")) {
      auto in = bdz::io::open_in(path_in(c, "coefficients.csv"));
      w.profiles = bdz::io::read_coefficients(in, w.basis);
    } else if (compute) {
      w.profiles = bdz::smooth_profiles(need_points(w, c, o, true), w.basis, c.smoothing(), c.threads);
    } else {
      throw Error(ErrorKind::IOError, "missing " + path_in(c, "coefficients.csv") + "; run `smooth` first");
    }
  }
  return *w.profiles;
}

struct Features {
  std::vector<int> cell_ids;
  Mat betas;
  std::string source;
};

Features read_features(const std::string& path) {
  auto in = bdz::io::open_in(path);
  const auto t = bdz::csv::read(in);
  const auto ci = t.require("cell_id");
  std::vector<std::size_t> cols;
  for (int j = 1;; ++j) {
    auto col = t.column("beta_" + std::to_string(j));
    if (!col) break;
    cols.push_back(*col);
  }
  if (cols.empty()) throw Error(ErrorKind::MissingColumn, path + " has no beta_ columns");
  Features f;
  f.source = path;
  f.betas.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    f.cell_ids.push_back(static_cast<int>(bdz::csv::parse_int(t.rows[i].at(ci))));
    for (std::size_t j = 0; j < cols.size(); ++j) f.betas(i, j) = bdz::csv::parse_double(t.rows[i].at(cols[j]));
  }
  return f;
}

void write_features(std::ostream& out, const std::vector<int>& ids, const Mat& betas) {
  out << "cell_id";
  for (Eigen::Index j = 1; j <= betas.cols(); ++j) out << ",beta_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < betas.rows(); ++i) {
    out << ids[i];
    for (Eigen::Index j = 0; j < betas.cols(); ++j) out << ',' << bdz::csv::format(betas(i, j));
    out << '\n';
  }
}

Features need_features(Workspace& w, const bdz::RunConfig& c, const Overrides& o, bool compute) {
  if (o.features) return read_features(*o.features);
  Features f;
  const auto& profiles = need_profiles(w, c, o, compute);
  f.cell_ids = bdz::cell_ids_of(profiles);
  f.betas = bdz::coefficient_matrix(profiles);
  f.source = "coefficients";
  return f;
}

/// Basis rows aligned with `cell_ids`: basis.csv when it lists exactly these
/// cells, otherwise computed.
Mat need_basis(const bdz::RunConfig& c, const bdz::GridSpec& grid, const std::vector<int>& cell_ids) {
  if (exists(c, "basis.csv")) {
    auto in = bdz::io::open_in(path_in(c, "basis.csv"));
    auto b = bdz::io::read_basis(in);
    if (b.cell_ids == cell_ids) return b.psi;
  }
  return bdz::compute_spatial_basis(grid, cell_ids, c.L, c.explained_target).psi;
}

std::optional<std::vector<int>> truth_for(const bdz::RunConfig& c, const std::vector<int>& cell_ids) {
  if (!exists(c, "truth_labels.csv")) return std::nullopt;
  auto in = bdz::io::open_in(path_in(c, "truth_labels.csv"));
  std::map<int, int> by_cell;
  for (auto [cell, label] : bdz::io::read_labels(in)) by_cell[cell] = label;
  std::vector<int> out;
  for (int id : cell_ids) {
    auto it = by_cell.find(id);
    if (it == by_cell.end()) return std::nullopt;
    out.push_back(it->second);
  }
  return out;
}

Json fit_summary(const bdz::FittedModel& m) {
  std::vector<int> sizes(m.params.K(), 0);
  for (int l : m.labels) ++sizes[l];
  return Json{{"K", m.params.K()},
              {"lambda1", m.lambda1},
              {"lambda2", m.lambda2},
              {"seed", m.seed},
              {"restart", m.restart},
              {"iterations", m.iterations},
              {"converged", m.converged},
              {"loglik", m.loglik},
              {"penalized_objective", m.penalized_objective},
              {"cluster_sizes", sizes}};
}

void write_model_outputs(const bdz::RunConfig& c, const std::vector<int>& ids, const bdz::FittedModel& m,
                         const Mat& psi) {
  write_json(c, "model.json", bdz::io::model_to_json(m));
  write_file(c, "assignments.csv", [&](std::ostream& out) { bdz::io::write_assignments(out, ids, m, psi); });
  write_file(c, "labels.csv", [&](std::ostream& out) { bdz::io::write_labels(out, ids, m.labels); });
}

// ---------------------------------------------------------------- stages

void run_ingest(const bdz::RunConfig& c, Json& summary) {
  const auto report = bdz::run_ingest(c);
  write_file(c, "abundance.csv", [&](std::ostream& out) { bdz::io::write_abundance(out, report.abundance); });
  write_json(c, "grid.json", bdz::io::grid_to_json(c.grid));
  summary["primary_records"] = report.primary_records;
  summary["fallback_records"] = report.fallback_records;
  summary["merged_records"] = report.merged_records;
  summary["alive_stems"] = report.alive_stems;
  summary["trees"] = report.trees;
  summary["species"] = report.species;
  summary["masked_cells"] = report.masked_cells;
  summary["warnings"] = report.warnings;
  Json top = Json::object();
  for (const auto& [sp, n] : report.abundance.species_totals()) top[sp] = n;
  summary["species_totals"] = top;
  if (c.emit_svg) {
    std::vector<std::optional<double>> richness(c.grid.cells());
    for (int cell = 0; cell < c.grid.cells(); ++cell) {
      richness[cell] = static_cast<double>(report.abundance.counts[cell].size());
    }
    bdz::emit_heatmap(richness, c.grid, path_in(c, "richness.svg"), {"Species richness"});
  }
}

void run_profiles(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  const auto grid = load_grid(c);
  const auto points = bdz::compute_profiles(load_abundance(c, o, grid), c.qgrid());
  write_file(c, "profiles.csv", [&](std::ostream& out) { bdz::io::write_profiles(out, points); });
  summary["cells"] = points.cell_ids.size();
  summary["q_points"] = c.q_points;
}

void run_smooth(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto& points = need_points(w, c, o, false);
  const auto profiles = bdz::smooth_profiles(points, w.basis, c.smoothing(), c.threads);
  write_file(c, "coefficients.csv", [&](std::ostream& out) { bdz::io::write_coefficients(out, profiles); });
  write_file(c, "fitted.csv", [&](std::ostream& out) { bdz::io::write_fitted(out, profiles, w.basis, c.qgrid()); });
  int constant = 0, unconverged = 0;
  double worst = 0.0;
  for (const auto& p : profiles) {
    constant += p.coefficients.constant_flag;
    unconverged += !p.converged;
    worst = std::max(worst, p.rmse);
  }
  summary["cells"] = profiles.size();
  summary["constant_profiles"] = constant;
  summary["unconverged"] = unconverged;
  summary["max_rmse"] = worst;
}

void run_variogram(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto& profiles = need_profiles(w, c, o, false);
  const auto v = bdz::compute_variogram(profiles, w.grid, w.basis, c.lag_width, c.lag_bins);
  write_file(c, "variogram.csv", [&](std::ostream& out) { bdz::io::write_variogram(out, v); });
  summary["bins"] = v.lag_centers.size();
}

void run_basis(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto f = need_features(w, c, o, false);
  const auto sb = bdz::compute_spatial_basis(w.grid, f.cell_ids, c.L, c.explained_target);
  write_file(c, "basis.csv", [&](std::ostream& out) { bdz::io::write_basis(out, f.cell_ids, sb.psi); });
  write_file(c, "eigenvalues.csv", [&](std::ostream& out) { bdz::io::write_eigenvalues(out, sb.eigenvalues); });
  summary["L"] = sb.L;
  summary["explained_fraction"] = sb.explained_fraction;
  summary["sites"] = f.cell_ids.size();
  if (c.emit_svg) {
    for (int l = 0; l < std::min(sb.L, 4); ++l) {
      std::vector<double> col(sb.psi.col(l).data(), sb.psi.col(l).data() + sb.psi.rows());
      const std::string name = "psi_" + std::to_string(l + 1);
      bdz::emit_heatmap(per_cell(w.grid, f.cell_ids, col), w.grid, path_in(c, name + ".svg"), {name});
    }
  }
}

void add_truth(const bdz::RunConfig& c, const std::vector<int>& ids, const std::vector<int>& labels, Json& summary) {
  if (auto truth = truth_for(c, ids)) summary["ari"] = bdz::adjusted_rand_index(labels, *truth);
}

void run_fit(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto f = need_features(w, c, o, false);
  const Mat psi = need_basis(c, w.grid, f.cell_ids);
  auto m = bdz::fit_em(f.betas, psi, c.K, c.fit);
  m = bdz::canonical_order(m, f.betas, psi);
  write_model_outputs(c, f.cell_ids, m, psi);
  summary["features"] = f.source;
  summary["model"] = fit_summary(m);
  add_truth(c, f.cell_ids, m.labels, summary);
}

void run_select(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto f = need_features(w, c, o, false);
  const Mat psi = need_basis(c, w.grid, f.cell_ids);
  auto result = bdz::grid_search(f.betas, psi, c.search, c.fit);
  write_file(c, "scores.csv", [&](std::ostream& out) { bdz::io::write_scores(out, result.table); });
  summary["features"] = f.source;
  summary["triplets"] = result.table.size();
  summary["failed"] = std::count_if(result.table.begin(), result.table.end(), [](const auto& r) { return !r.ok; });
  if (!result.best_bic) throw Error(ErrorKind::AllRestartsFailed, "every grid triplet failed");
  auto pick = [&](std::size_t i) {
    const auto& r = result.table[i];
    return Json{{"K", r.K}, {"lambda1", r.lambda1}, {"lambda2", r.lambda2}, {"bic", r.bic}, {"icl", r.icl}, {"C", r.C}};
  };
  Json rank_bic = Json::array(), rank_icl = Json::array();
  for (std::size_t r = 0; r < std::min<std::size_t>(3, result.rank_bic.size()); ++r) {
    rank_bic.push_back(pick(result.rank_bic[r]));
    rank_icl.push_back(pick(result.rank_icl[r]));
  }
  summary["best_bic"] = pick(*result.best_bic);
  summary["best_icl"] = pick(*result.best_icl);
  summary["top_bic"] = rank_bic;
  summary["top_icl"] = rank_icl;
  auto m = bdz::canonical_order(result.models[*result.best_bic], f.betas, psi);
  write_model_outputs(c, f.cell_ids, m, psi);
  summary["model"] = fit_summary(m);
  add_truth(c, f.cell_ids, m.labels, summary);
}

void run_zone(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  Workspace w = open_workspace(c);
  const auto f = need_features(w, c, o, true);
  const Mat psi = need_basis(c, w.grid, f.cell_ids);
  bdz::FittedModel m;
  if (o.select) {
    auto result = bdz::grid_search(f.betas, psi, c.search, c.fit);
    if (!result.best_bic) throw Error(ErrorKind::AllRestartsFailed, "every grid triplet failed");
    m = result.models[*result.best_bic];
    summary["model_source"] = "grid_search";
  } else if (exists(c, "model.json") && !o.K) {
    m = bdz::io::model_from_json(bdz::io::read_json(path_in(c, "model.json")));
    if (m.params.dim() != f.betas.cols() || m.params.L() != psi.cols()) {
      throw Error(ErrorKind::BasisMismatch, "model.json does not match the current features or basis");
    }
    summary["model_source"] = "model.json";
  } else {
    m = bdz::fit_em(f.betas, psi, c.K, c.fit);
    summary["model_source"] = "fit";
  }
  m.tau = bdz::e_step(m.params, f.betas, psi);
  m.labels = bdz::hard_assignment(m.tau);
  m = bdz::canonical_order(m, f.betas, psi);
  const int K = m.params.K();

  write_file(c, "zones.csv", [&](std::ostream& out) { bdz::io::write_labels(out, f.cell_ids, m.labels); });
  const Mat pi = bdz::log_mixing_matrix(m.params.omega, psi).array().exp();
  for (int k = 0; k < K; ++k) {
    const std::string name = "prior_k" + std::to_string(k + 1);
    write_file(c, name + ".csv", [&](std::ostream& out) {
      out << "cell_id,pi\n";
      for (std::size_t i = 0; i < f.cell_ids.size(); ++i) {
        out << f.cell_ids[i] << ',' << bdz::csv::format(pi(static_cast<Eigen::Index>(i), k)) << '\n';
      }
    });
    if (c.emit_svg) {
      std::vector<double> col(pi.col(k).data(), pi.col(k).data() + pi.rows());
      bdz::emit_heatmap(per_cell(w.grid, f.cell_ids, col), w.grid, path_in(c, name + ".svg"),
                        {"Prior probability, cluster " + std::to_string(k + 1)});
    }
  }
  if (w.profiles) {
    const auto qg = c.qgrid();
    const Mat means = bdz::cluster_mean_profiles(*w.profiles, m.labels, K, w.basis, qg);
    for (int k = 0; k < K; ++k) {
      write_file(c, "mean_profile_k" + std::to_string(k + 1) + ".csv", [&](std::ostream& out) {
        out << "q,H\n";
        for (std::size_t r = 0; r < qg.q.size(); ++r) {
          out << bdz::csv::format(qg.q[r]) << ',' << bdz::csv::format(means(k, static_cast<Eigen::Index>(r))) << '\n';
        }
      });
    }
  }
  if (c.emit_svg) {
    std::vector<double> labels(m.labels.begin(), m.labels.end());
    for (auto& l : labels) l += 1.0;
    bdz::HeatmapOptions opts{"Zones", 16, true};
    bdz::emit_heatmap(per_cell(w.grid, f.cell_ids, labels), w.grid, path_in(c, "zones.svg"), opts);
  }
  summary["features"] = f.source;
  summary["model"] = fit_summary(m);
  add_truth(c, f.cell_ids, m.labels, summary);
}

void run_simulate(const bdz::RunConfig& c, const Overrides& o, Json& summary) {
  bdz::SyntheticScenario s = o.scenario ? bdz::io::scenario_from_json(bdz::io::read_json(*o.scenario))
                                        : bdz::SyntheticScenario::standard(o.seed.value_or(1));
  if (o.seed) s.seed = *o.seed;
  const auto labels = bdz::simulate_labels(s);
  std::vector<int> ids(s.spec.cells());
  for (int i = 0; i < s.spec.cells(); ++i) ids[i] = i;
  write_json(c, "scenario.json", bdz::io::scenario_to_json(s));
  write_json(c, "grid.json", bdz::io::grid_to_json(s.spec));
  write_file(c, "truth_labels.csv", [&](std::ostream& out) { bdz::io::write_labels(out, ids, labels.labels); });
  summary["cells"] = s.spec.cells();
  summary["K"] = s.K;
  summary["seed"] = s.seed;
  if (!s.pools.empty()) {
    const auto ab = bdz::simulate_abundances(labels.labels, s.pools, s);
    write_file(c, "abundance.csv", [&](std::ostream& out) { bdz::io::write_abundance(out, ab); });
    summary["trees"] = ab.total();
  }
  if (!s.means.empty()) {
    const Mat betas = bdz::simulate_coefficients(labels.labels, s);
    write_file(c, "features.csv", [&](std::ostream& out) { write_features(out, ids, betas); });
    summary["feature_dim"] = betas.cols();
  }
}

int fail(const std::string& name, const std::string& message) {
  Json j{{"error", name}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biodiversity-profile zoning of gridded forest census data"};
  app.require_subcommand(1);
  Overrides o;

  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", o.out_dir, "Artifact directory (default: config out_dir)");
  app.add_option("--threads", o.threads, "Worker cap (0 = all cores)");
  app.add_flag("--no-svg", o.no_svg, "Skip SVG maps");

  auto add_grid = [&](CLI::App* sub) {
    sub->add_option("--cell-size", o.cell_size, "Cell edge in meters");
    sub->add_option("--nx", o.nx, "Cells along x");
    sub->add_option("--ny", o.ny, "Cells along y");
    sub->add_option("--origin-x", o.origin_x, "Grid origin x (m)");
    sub->add_option("--origin-y", o.origin_y, "Grid origin y (m)");
  };
  auto add_q = [&](CLI::App* sub) {
    sub->add_option("--q-max", o.q_max, "Upper diversity order");
    sub->add_option("--q-points", o.q_points, "Orders on [0, q-max]");
  };
  auto add_smooth = [&](CLI::App* sub) {
    sub->add_option("--basis-count", o.basis_count, "B-spline basis size J");
    sub->add_option("--smooth-lambda", o.smooth_lambda, "Roughness penalty");
  };
  auto add_fit = [&](CLI::App* sub) {
    sub->add_option("--features", o.features, "Feature CSV (cell_id, beta_1..) instead of coefficients.csv");
    sub->add_option("--L", o.L, "Spatial basis size");
    sub->add_option("--explained", o.explained_target, "Pick L by explained fraction");
    sub->add_option("--lambda1", o.lambda1, "Mean penalty");
    sub->add_option("--lambda2", o.lambda2, "Precision penalty");
    sub->add_option("--n-init", o.n_init, "EM restarts");
    sub->add_option("--max-iter", o.max_iter, "EM iteration cap");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_flag("--fix-mixing", o.fix_mixing, "Uniform mixing proportions");
  };
  auto add_grid_search = [&](CLI::App* sub) {
    sub->add_option("--k-grid", o.k_grid, "Cluster counts to try");
    sub->add_option("--lambda1-grid", o.l1_grid, "Mean penalties to try");
    sub->add_option("--lambda2-grid", o.l2_grid, "Precision penalties to try");
  };

  auto* ingest = app.add_subcommand("ingest", "Parse census files and bin alive trees to the grid");
  ingest->add_option("--census", o.census, "Primary stem census CSV");
  ingest->add_option("--fallback", o.fallback, "Census used inside the mask");
  ingest->add_option("--mask", o.mask, "Mask CSV of (x_index, y_index); default: cells the primary misses");
  ingest->add_option("--min-dbh", o.min_dbh, "Keep stems with dbh above this (cm)");
  ingest->add_flag("--lenient", o.lenient, "Skip malformed rows instead of failing");
  add_grid(ingest);

  auto* profiles = app.add_subcommand("profiles", "Hill-number profiles per cell");
  profiles->add_option("--abundance", o.abundance, "Abundance CSV (default: <out>/abundance.csv)");
  add_grid(profiles);
  add_q(profiles);

  auto* smooth = app.add_subcommand("smooth", "Monotone smoothing of the profiles");
  add_q(smooth);
  add_smooth(smooth);

  auto* variogram = app.add_subcommand("variogram", "Trace variogram of the smoothed profiles");
  add_q(variogram);
  add_smooth(variogram);
  variogram->add_option("--lag-width", o.lag_width, "Bin width in meters");
  variogram->add_option("--lag-bins", o.lag_bins, "Number of bins");

  auto* basis = app.add_subcommand("basis", "Thin-plate bending-energy spatial basis");
  basis->add_option("--features", o.features, "Feature CSV giving the site list");
  basis->add_option("--L", o.L, "Basis size");
  basis->add_option("--explained", o.explained_target, "Pick L by explained fraction");
  add_q(basis);
  add_smooth(basis);

  auto* fit = app.add_subcommand("fit", "Fit the spatial mixture for one (K, lambda1, lambda2)");
  fit->add_option("--K", o.K, "Number of clusters");
  add_q(fit);
  add_smooth(fit);
  add_fit(fit);

  auto* select = app.add_subcommand("select", "Grid search scored by BIC and ICL");
  add_q(select);
  add_smooth(select);
  add_fit(select);
  add_grid_search(select);

  auto* zone = app.add_subcommand("zone", "Zoning maps; computes missing upstream artifacts");
  zone->add_option("--abundance", o.abundance, "Abundance CSV (default: <out>/abundance.csv)");
  zone->add_option("--K", o.K, "Number of clusters (refits even if model.json exists)");
  zone->add_flag("--select", o.select, "Choose the model by grid search");
  add_q(zone);
  add_smooth(zone);
  add_fit(zone);
  add_grid_search(zone);

  auto* simulate = app.add_subcommand("simulate", "Synthetic scenario with known zones");
  simulate->add_option("--scenario", o.scenario, "Scenario JSON (default: standard three-band scenario)");
  simulate->add_option("--seed", o.seed, "Scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("BadConfig", e.what());
  }

  try {
    const bdz::RunConfig c = build_config(o);
    fs::create_directories(c.out_dir);
    Stopwatch clock;
    Json summary;
    std::string stage;
    if (*ingest) {
      stage = "ingest";
      run_ingest(c, summary);
    } else if (*profiles) {
      stage = "profiles";
      run_profiles(c, o, summary);
    } else if (*smooth) {
      stage = "smooth";
      run_smooth(c, o, summary);
    } else if (*variogram) {
      stage = "variogram";
      run_variogram(c, o, summary);
    } else if (*basis) {
      stage = "basis";
      run_basis(c, o, summary);
    } else if (*fit) {
      stage = "fit";
      run_fit(c, o, summary);
    } else if (*select) {
      stage = "select";
      run_select(c, o, summary);
    } else if (*zone) {
      stage = "zone";
      run_zone(c, o, summary);
    } else if (*simulate) {
      stage = "simulate";
      run_simulate(c, o, summary);
    }
    clock.lap(stage);
    Json doc;
    doc["stage"] = stage;
    doc["seed"] = c.fit.seed;
    doc["result"] = summary;
    doc["config"] = bdz::config_to_json(c);
    write_json(c, stage + "_summary.json", doc);
    write_json(c, stage + "_timings.json", clock.json());
    std::cout << doc["result"].dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    return fail(std::string(e.name()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("IOError", e.what());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what());
  }
}
