#include <gtest/gtest.h>

#include <sstream>

#include "bdz/error.hpp"
#include "bdz/heatmap.hpp"
#include "bdz/io.hpp"
#include "bdz/pipeline.hpp"
#include "bdz/synth.hpp"

using namespace bdz;

namespace {

const BasisSystem& standard_basis() {
  static const BasisSystem b = build_basis(15, 5.0, 3, 501);
  return b;
}

}  // namespace

TEST(Io, AbundanceRoundTrip) {
  auto s = SyntheticScenario::standard(2);
  auto ab = simulate_abundances(simulate_labels(s).labels, s.pools, s);
  std::stringstream buf;
  io::write_abundance(buf, ab);
  auto back = io::read_abundance(buf, s.spec);
  EXPECT_EQ(back.counts, ab.counts);
}

TEST(Io, CoefficientsRoundTripWithinFormatting) {
  std::vector<SmoothedProfile> ps;
  for (auto p : {std::vector<double>{0.8, 0.1, 0.1}, {0.5, 0.5}, {0.4, 0.3, 0.2, 0.1}}) {
    ps.push_back(fit_profile(profile_points(RelativeAbundance(p), QGrid::uniform()), standard_basis()));
    ps.back().coefficients.cell_id = static_cast<int>(ps.size()) * 7;
  }
  std::stringstream buf;
  io::write_coefficients(buf, ps);
  auto back = io::read_coefficients(buf, standard_basis());
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].coefficients.cell_id, ps[i].coefficients.cell_id);
    EXPECT_EQ(back[i].coefficients.constant_flag, ps[i].coefficients.constant_flag);
    EXPECT_LT((back[i].coefficients.beta() - ps[i].coefficients.beta()).cwiseAbs().maxCoeff(),
              1e-9 * (1 + ps[i].coefficients.beta().cwiseAbs().maxCoeff()));
    EXPECT_LT((back[i].fitted - ps[i].fitted).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Io, LabelsAreOneBasedOnDisk) {
  std::stringstream buf;
  io::write_labels(buf, {3, 9}, {0, 2});
  EXPECT_EQ(buf.str(), "cell_id,label\n3,1\n9,3\n");
  auto back = io::read_labels(buf);
  EXPECT_EQ(back, (std::vector<std::pair<int, int>>{{3, 0}, {9, 2}}));
}

TEST(Io, ModelJsonRoundTrip) {
  auto s = SyntheticScenario::standard(3);
  const auto labels = simulate_labels(s).labels;
  const Mat betas = simulate_coefficients(labels, s);
  const Mat psi = grid_spatial_basis(s.spec, 8).psi;
  FitConfig cfg;
  cfg.n_init = 1;
  auto m = fit_em(betas, psi, 3, cfg);
  auto back = io::model_from_json(io::model_to_json(m));
  EXPECT_EQ(back.params.K(), 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(back.params.mu[k], m.params.mu[k]);
    EXPECT_EQ(back.params.precision(k), m.params.precision(k));
  }
  EXPECT_EQ(back.params.omega, m.params.omega);
  EXPECT_EQ(back.objective_trace, m.objective_trace);
  EXPECT_EQ(io::model_to_json(back).dump(), io::model_to_json(m).dump());
}

TEST(Io, ScenarioJsonRoundTrip) {
  auto s = SyntheticScenario::standard(9);
  auto back = io::scenario_from_json(io::scenario_to_json(s));
  EXPECT_EQ(io::scenario_to_json(back).dump(), io::scenario_to_json(s).dump());
  EXPECT_EQ(simulate_labels(back).labels, simulate_labels(s).labels);
}

TEST(Config, UnknownKeyRejected) {
  RunConfig c;
  try {
    apply_config_json(c, io::Json::parse(R"({"K": 3, "bogus": 1})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadConfig);
  }
}

TEST(Config, RoundTrip) {
  RunConfig c;
  apply_config_json(c, io::Json::parse(R"({"K": 3, "L": 10, "fit": {"lambda1": 0.5, "seed": 7},
                                             "grid": {"nx": 10, "ny": 14}})"));
  EXPECT_EQ(c.K, 3);
  EXPECT_EQ(c.L, 10);
  EXPECT_EQ(c.fit.lambda1, 0.5);
  EXPECT_EQ(c.fit.seed, 7u);
  EXPECT_EQ(c.grid.nx, 10);
  RunConfig d;
  apply_config_json(d, config_to_json(c));
  EXPECT_EQ(config_to_json(d).dump(), config_to_json(c).dump());
}

TEST(Heatmap, DeterministicAndMarksMissing) {
  GridSpec g{0, 0, 20, 3, 2};
  std::vector<std::optional<double>> v{1.0, 2.0, std::nullopt, 4.0, 5.0, 6.0};
  const auto a = render_heatmap(v, g, {"t"});
  EXPECT_EQ(a, render_heatmap(v, g, {"t"}));
  EXPECT_NE(a.find("<svg"), std::string::npos);
  EXPECT_NE(a.find("#cccccc"), std::string::npos);
  EXPECT_THROW(render_heatmap({1.0}, g), Error);
}

TEST(Pipeline, CanonicalOrderSortsBySize) {
  auto s = SyntheticScenario::standard(4);
  const auto labels = simulate_labels(s).labels;
  const Mat betas = simulate_coefficients(labels, s);
  const Mat psi = grid_spatial_basis(s.spec, 8).psi;
  FitConfig cfg;
  cfg.n_init = 1;
  auto m = canonical_order(fit_em(betas, psi, 3, cfg), betas, psi);
  std::vector<int> sizes(3, 0);
  for (int l : m.labels) ++sizes[l];
  EXPECT_GE(sizes[0], sizes[1]);
  EXPECT_GE(sizes[1], sizes[2]);
  EXPECT_EQ(m.labels, hard_assignment(e_step(m.params, betas, psi)));
}
