#include "bdz/io.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "bdz/csv.hpp"
#include "bdz/error.hpp"
#include "bdz/mlogit.hpp"

namespace bdz::io {

using csv::format;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IOError, "cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IOError, "cannot read " + path);
  return in;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorKind::IOError, "write failed: " + path);
}

Json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, path + ": " + e.what());
  }
}

void write_abundance(std::ostream& out, const AbundanceGrid& grid) {
  out << "cell_id,x_index,y_index,species,count\n";
  for (int c = 0; c < static_cast<int>(grid.counts.size()); ++c) {
    for (const auto& [sp, n] : grid.counts[c]) {
      out << c << ',' << grid.spec.x_index(c) << ',' << grid.spec.y_index(c) << ',' << csv::escape(sp) << ',' << n
          << '\n';
    }
  }
}

AbundanceGrid read_abundance(std::istream& in, const GridSpec& spec) {
  spec.validate();
  const csv::Table t = csv::read(in);
  const auto ci = t.require("cell_id");
  const auto si = t.require("species");
  const auto ni = t.require("count");
  AbundanceGrid grid;
  grid.spec = spec;
  grid.counts.resize(spec.cells());
  for (const auto& row : t.rows) {
    const long long c = csv::parse_int(row.at(ci));
    const long long n = csv::parse_int(row.at(ni));
    if (c < 0 || c >= spec.cells()) throw Error(ErrorKind::OutOfBounds, "cell_id " + std::to_string(c) + " is off the grid");
    if (n < 0) throw Error(ErrorKind::MalformedRow, "negative count");
    if (n > 0) grid.counts[c][row.at(si)] += n;
  }
  return grid;
}

void write_profiles(std::ostream& out, const CellProfiles& profiles) {
  out << "cell_id,q,H\n";
  for (std::size_t i = 0; i < profiles.cell_ids.size(); ++i) {
    const auto& p = profiles.points[i];
    for (std::size_t r = 0; r < p.q.size(); ++r) {
      out << profiles.cell_ids[i] << ',' << format(p.q[r]) << ',' << format(p.h[r]) << '\n';
    }
  }
}

CellProfiles read_profiles(std::istream& in) {
  const csv::Table t = csv::read(in);
  const auto ci = t.require("cell_id");
  const auto qi = t.require("q");
  const auto hi = t.require("H");
  std::map<int, ProfilePoints> by_cell;
  for (const auto& row : t.rows) {
    auto& p = by_cell[static_cast<int>(csv::parse_int(row.at(ci)))];
    p.q.push_back(csv::parse_double(row.at(qi)));
    p.h.push_back(csv::parse_double(row.at(hi)));
  }
  CellProfiles out;
  for (auto& [c, p] : by_cell) {
    out.cell_ids.push_back(c);
    out.points.push_back(std::move(p));
  }
  return out;
}

void write_coefficients(std::ostream& out, const std::vector<SmoothedProfile>& profiles) {
  const Eigen::Index J = profiles.empty() ? 0 : profiles.front().coefficients.alpha.size();
  out << "cell_id,xi0,xi1";
  for (Eigen::Index j = 1; j <= J; ++j) out << ",alpha_" << j;
  out << ",constant_flag,rmse\n";
  for (const auto& p : profiles) {
    const auto& c = p.coefficients;
    if (c.alpha.size() != J) throw Error(ErrorKind::BasisMismatch, "profiles use different basis sizes");
    out << c.cell_id << ',' << format(c.xi0) << ',' << format(c.xi1);
    for (Eigen::Index j = 0; j < J; ++j) out << ',' << format(c.alpha(j));
    out << ',' << (c.constant_flag ? 1 : 0) << ',' << format(p.rmse) << '\n';
  }
}

std::vector<SmoothedProfile> read_coefficients(std::istream& in, const BasisSystem& basis) {
  const csv::Table t = csv::read(in);
  const auto ci = t.require("cell_id");
  const auto x0 = t.require("xi0");
  const auto x1 = t.require("xi1");
  const auto fi = t.require("constant_flag");
  const auto ri = t.column("rmse");
  std::vector<std::size_t> ai;
  for (int j = 1;; ++j) {
    auto c = t.column("alpha_" + std::to_string(j));
    if (!c) break;
    ai.push_back(*c);
  }
  if (static_cast<int>(ai.size()) != basis.size()) {
    throw Error(ErrorKind::BasisMismatch, "coefficients file has " + std::to_string(ai.size()) +
                                              " alpha columns, basis has " + std::to_string(basis.size()));
  }
  std::vector<SmoothedProfile> out;
  for (const auto& row : t.rows) {
    ProfileCoefficients c;
    c.cell_id = static_cast<int>(csv::parse_int(row.at(ci)));
    c.xi0 = csv::parse_double(row.at(x0));
    c.xi1 = csv::parse_double(row.at(x1));
    c.alpha.resize(static_cast<Eigen::Index>(ai.size()));
    for (std::size_t j = 0; j < ai.size(); ++j) c.alpha(j) = csv::parse_double(row.at(ai[j]));
    c.constant_flag = csv::parse_int(row.at(fi)) != 0;
    out.push_back(restore_profile(c, basis, ri ? csv::parse_double(row.at(*ri)) : 0.0));
  }
  return out;
}

void write_fitted(std::ostream& out, const std::vector<SmoothedProfile>& profiles, const BasisSystem& basis,
                  const QGrid& grid) {
  out << "cell_id,q,H_fit\n";
  for (const auto& p : profiles) {
    for (double q : grid.q) {
      out << p.coefficients.cell_id << ',' << format(q) << ',' << format(evaluate_profile(p.coefficients, basis, q))
          << '\n';
    }
  }
}

void write_variogram(std::ostream& out, const EmpiricalVariogram& v) {
  out << "lag_center,gamma_hat,pair_count\n";
  for (std::size_t b = 0; b < v.lag_centers.size(); ++b) {
    out << format(v.lag_centers[b]) << ',' << (v.semivariance[b] ? format(*v.semivariance[b]) : std::string("NA"))
        << ',' << v.pair_counts[b] << '\n';
  }
}

void write_basis(std::ostream& out, const std::vector<int>& cell_ids, const Mat& psi) {
  if (psi.rows() != static_cast<Eigen::Index>(cell_ids.size())) {
    throw Error(ErrorKind::LengthMismatch, "basis rows and cell ids disagree");
  }
  out << "cell_id";
  for (Eigen::Index l = 1; l <= psi.cols(); ++l) out << ",psi_" << l;
  out << '\n';
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    out << cell_ids[i];
    for (Eigen::Index l = 0; l < psi.cols(); ++l) out << ',' << format(psi(i, l));
    out << '\n';
  }
}

CellBasis read_basis(std::istream& in) {
  const csv::Table t = csv::read(in);
  const auto ci = t.require("cell_id");
  std::vector<std::size_t> cols;
  for (int l = 1;; ++l) {
    auto c = t.column("psi_" + std::to_string(l));
    if (!c) break;
    cols.push_back(*c);
  }
  if (cols.empty()) throw Error(ErrorKind::MissingColumn, "basis file has no psi_ columns");
  CellBasis out;
  out.psi.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.cell_ids.push_back(static_cast<int>(csv::parse_int(t.rows[i].at(ci))));
    for (std::size_t l = 0; l < cols.size(); ++l) out.psi(i, l) = csv::parse_double(t.rows[i].at(cols[l]));
  }
  return out;
}

void write_eigenvalues(std::ostream& out, const Vec& eigenvalues) {
  out << "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) out << i + 1 << ',' << format(eigenvalues(i)) << '\n';
}

void write_scores(std::ostream& out, const std::vector<ScoreRecord>& table) {
  out << "K,lambda1,lambda2,loglik,C,bic,icl,entropy_term,iterations,converged,ok,error\n";
  for (const auto& r : table) {
    out << r.K << ',' << format(r.lambda1) << ',' << format(r.lambda2) << ',';
    if (r.ok) {
      out << format(r.loglik) << ',' << r.C << ',' << format(r.bic) << ',' << format(r.icl) << ','
          << format(r.entropy_term);
    } else {
      out << "NA,NA,NA,NA,NA";
    }
    out << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << (r.ok ? 1 : 0) << ',' << csv::escape(r.error)
        << '\n';
  }
}

void write_assignments(std::ostream& out, const std::vector<int>& cell_ids, const FittedModel& model, const Mat& psi) {
  const int K = model.params.K();
  if (model.tau.rows() != static_cast<Eigen::Index>(cell_ids.size()) || psi.rows() != model.tau.rows()) {
    throw Error(ErrorKind::LengthMismatch, "assignments: row counts disagree");
  }
  const Mat pi = log_mixing_matrix(model.params.omega, psi).array().exp();
  out << "cell_id,label";
  for (int k = 1; k <= K; ++k) out << ",tau_" << k;
  for (int k = 1; k <= K; ++k) out << ",pi_" << k;
  out << '\n';
  for (std::size_t i = 0; i < cell_ids.size(); ++i) {
    out << cell_ids[i] << ',' << model.labels[i] + 1;
    for (int k = 0; k < K; ++k) out << ',' << format(model.tau(i, k));
    for (int k = 0; k < K; ++k) out << ',' << format(pi(i, k));
    out << '\n';
  }
}

void write_labels(std::ostream& out, const std::vector<int>& cell_ids, const std::vector<int>& labels) {
  if (cell_ids.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "labels and cell ids disagree");
  out << "cell_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << cell_ids[i] << ',' << labels[i] + 1 << '\n';
}

std::vector<std::pair<int, int>> read_labels(std::istream& in) {
  const csv::Table t = csv::read(in);
  const auto ci = t.require("cell_id");
  const auto li = t.require("label");
  std::vector<std::pair<int, int>> out;
  for (const auto& row : t.rows) {
    out.emplace_back(static_cast<int>(csv::parse_int(row.at(ci))), static_cast<int>(csv::parse_int(row.at(li))) - 1);
  }
  return out;
}

namespace {

Json matrix_rows(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Mat matrix_from_rows(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw Error(ErrorKind::BadConfig, "matrix has wrong row count");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw Error(ErrorKind::BadConfig, "matrix has wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vec vector_from(const Json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
}

}  // namespace

Json model_to_json(const FittedModel& model) {
  const ModelParams& p = model.params;
  Json j;
  j["K"] = p.K();
  j["dim"] = p.dim();
  j["L"] = p.L();
  j["lambda1"] = model.lambda1;
  j["lambda2"] = model.lambda2;
  j["seed"] = model.seed;
  j["restart"] = model.restart;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  j["loglik"] = model.loglik;
  j["penalized_objective"] = model.penalized_objective;
  Json mu = Json::array();
  Json W = Json::array();
  for (int k = 0; k < p.K(); ++k) {
    mu.push_back(std::vector<double>(p.mu[k].data(), p.mu[k].data() + p.mu[k].size()));
    Json flat = Json::array();
    const Mat& w = p.precision(k);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    W.push_back(std::move(flat));
  }
  j["mu"] = std::move(mu);
  j["W"] = std::move(W);
  j["omega"] = matrix_rows(p.omega);
  j["objective_trace"] = model.objective_trace;
  j["reseed_iterations"] = model.reseed_iterations;
  return j;
}

FittedModel model_from_json(const Json& j) {
  return guarded([&] {
    const int K = j.at("K").get<int>();
    const int p = j.at("dim").get<int>();
    const int L = j.at("L").get<int>();
    if (K < 1 || p < 1 || L < 0) throw Error(ErrorKind::BadConfig, "model dimensions are invalid");
    std::vector<Vec> mu;
    std::vector<Mat> W;
    for (int k = 0; k < K; ++k) {
      Vec m = vector_from(j.at("mu").at(k));
      if (m.size() != p) throw Error(ErrorKind::BadConfig, "mean has the wrong length");
      mu.push_back(std::move(m));
      const Json& flat = j.at("W").at(k);
      if (static_cast<int>(flat.size()) != p * p) throw Error(ErrorKind::BadConfig, "precision has the wrong size");
      Mat w(p, p);
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) w(r, c) = flat[static_cast<std::size_t>(r * p + c)].get<double>();
      }
      W.push_back(std::move(w));
    }
    FittedModel m;
    m.params = ModelParams(std::move(mu), std::move(W), matrix_from_rows(j.at("omega"), K - 1, L));
    m.lambda1 = j.at("lambda1").get<double>();
    m.lambda2 = j.at("lambda2").get<double>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.restart = j.value("restart", 0);
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    m.loglik = j.value("loglik", 0.0);
    m.penalized_objective = j.value("penalized_objective", 0.0);
    m.objective_trace = j.value("objective_trace", std::vector<double>{});
    m.reseed_iterations = j.value("reseed_iterations", std::vector<int>{});
    return m;
  });
}

Json grid_to_json(const GridSpec& spec) {
  return Json{{"origin_x", spec.origin_x}, {"origin_y", spec.origin_y}, {"cell_size", spec.cell_size},
              {"nx", spec.nx}, {"ny", spec.ny}};
}

GridSpec grid_from_json(const Json& j, GridSpec g) {
  return guarded([&] {
    g.origin_x = j.value("origin_x", g.origin_x);
    g.origin_y = j.value("origin_y", g.origin_y);
    g.cell_size = j.value("cell_size", g.cell_size);
    g.nx = j.value("nx", g.nx);
    g.ny = j.value("ny", g.ny);
    g.validate();
    return g;
  });
}

Json scenario_to_json(const SyntheticScenario& s) {
  Json j;
  j["grid"] = grid_to_json(s.spec);
  j["K"] = s.K;
  j["layout"] = s.layout == LabelLayout::Blocks ? "blocks" : "omega";
  if (s.layout == LabelLayout::Omega) j["omega"] = matrix_rows(s.omega);
  Json means = Json::array();
  Json covs = Json::array();
  for (std::size_t k = 0; k < s.means.size(); ++k) {
    means.push_back(std::vector<double>(s.means[k].data(), s.means[k].data() + s.means[k].size()));
    covs.push_back(matrix_rows(s.covariances[k]));
  }
  j["means"] = std::move(means);
  j["covariances"] = std::move(covs);
  Json pools = Json::array();
  for (const auto& p : s.pools) pools.push_back(Json{{"species", p.species}, {"weights", p.weights}});
  j["pools"] = std::move(pools);
  j["min_total"] = s.min_total;
  j["max_total"] = s.max_total;
  j["seed"] = s.seed;
  return j;
}

SyntheticScenario scenario_from_json(const Json& j) {
  return guarded([&] {
    SyntheticScenario s = SyntheticScenario::standard(j.value("seed", std::uint64_t{1}));
    if (j.contains("grid")) s.spec = grid_from_json(j.at("grid"), s.spec);
    s.K = j.value("K", s.K);
    const std::string layout = j.value("layout", std::string("blocks"));
    if (layout == "blocks") {
      s.layout = LabelLayout::Blocks;
    } else if (layout == "omega") {
      s.layout = LabelLayout::Omega;
      const Json& om = j.at("omega");
      s.omega = matrix_from_rows(om, static_cast<Eigen::Index>(om.size()),
                                 om.empty() ? 0 : static_cast<Eigen::Index>(om[0].size()));
    } else {
      throw Error(ErrorKind::BadConfig, "layout must be \"blocks\" or \"omega\"");
    }
    if (j.contains("means")) {
      s.means.clear();
      s.covariances.clear();
      for (const auto& m : j.at("means")) s.means.push_back(vector_from(m));
      for (const auto& c : j.at("covariances")) {
        const auto p = static_cast<Eigen::Index>(c.size());
        s.covariances.push_back(matrix_from_rows(c, p, p));
      }
    } else if (s.K != 3) {
      s.means.clear();
      s.covariances.clear();
    }
    if (j.contains("pools")) {
      s.pools.clear();
      for (const auto& p : j.at("pools")) {
        s.pools.push_back({p.at("species").get<std::vector<std::string>>(), p.at("weights").get<std::vector<double>>()});
      }
    } else if (s.K != 3) {
      s.pools.clear();
    }
    s.min_total = j.value("min_total", s.min_total);
    s.max_total = j.value("max_total", s.max_total);
    s.validate();
    return s;
  });
}

}  // namespace bdz::io
