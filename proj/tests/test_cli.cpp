#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bdz/io.hpp"

namespace fs = std::filesystem;
using bdz::io::Json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bdz_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& err = {}) {
  std::string cmd = std::string(BDZ_CLI_PATH) + " " + args + " > /dev/null";
  if (!err.empty()) cmd += " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json summary(const fs::path& dir, const std::string& stage) { return Json::parse(slurp(dir / (stage + "_summary.json"))); }

}  // namespace

TEST(Cli, BadKReportsErrorJson) {
  const auto dir = scratch("badk");
  ASSERT_EQ(run("--out " + dir.string() + " simulate"), 0);
  const auto err = dir / "err.txt";
  EXPECT_NE(run("--out " + dir.string() + " fit --features " + (dir / "features.csv").string() + " --K 0", err), 0);
  const Json j = Json::parse(slurp(err));
  EXPECT_EQ(j["error"], "BadK");
  EXPECT_TRUE(j.contains("message"));
}

TEST(Cli, MissingInputIsIOError) {
  const auto dir = scratch("missing");
  const auto err = dir / "err.txt";
  EXPECT_NE(run("--out " + dir.string() + " smooth", err), 0);
  EXPECT_EQ(Json::parse(slurp(err))["error"], "IOError");
}

TEST(Cli, UnknownConfigKeyIsBadConfig) {
  const auto dir = scratch("config");
  std::ofstream(dir / "c.json") << R"({"nonsense": true})";
  const auto err = dir / "err.txt";
  EXPECT_NE(run("--config " + (dir / "c.json").string() + " --out " + dir.string() + " simulate", err), 0);
  EXPECT_EQ(Json::parse(slurp(err))["error"], "BadConfig");
}

TEST(Cli, EnvironmentConfigIsOverriddenByFlags) {
  const auto dir = scratch("env");
  std::ofstream(dir / "c.json") << R"({"K": 2, "L": 8})";
  ASSERT_EQ(run("--out " + dir.string() + " simulate"), 0);
  const std::string env = "BIODIV_ZONER_CONFIG=" + (dir / "c.json").string() + " ";
  const std::string features = (dir / "features.csv").string();
  const std::string cmd = env + BDZ_CLI_PATH + " --out " + dir.string() + " fit --features " + features +
                          " --n-init 1 --K 3 > /dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const Json s = summary(dir, "fit");
  EXPECT_EQ(s["config"]["K"], 3);
  EXPECT_EQ(s["config"]["L"], 8);
}

TEST(Cli, SelectNamesThreeClustersOnSynthetic) {
  const auto dir = scratch("select");
  ASSERT_EQ(run("--out " + dir.string() + " simulate --seed 5"), 0);
  ASSERT_EQ(run("--out " + dir.string() + " select --features " + (dir / "features.csv").string() +
                " --k-grid 2 3 4 5 --lambda1-grid 0.1 1 --lambda2-grid 1 10 --n-init 3"),
            0);
  const Json s = summary(dir, "select");
  EXPECT_EQ(s["result"]["best_bic"]["K"], 3);
  EXPECT_GE(s["result"]["ari"].get<double>(), 0.9);
  EXPECT_TRUE(fs::exists(dir / "scores.csv"));
  EXPECT_TRUE(fs::exists(dir / "model.json"));
}

TEST(Cli, ZoneFromAbundancesRecoversBlocks) {
  const auto dir = scratch("zone");
  ASSERT_EQ(run("--out " + dir.string() + " simulate"), 0);
  ASSERT_EQ(run("--out " + dir.string() + " zone --K 3 --n-init 2"), 0);
  const Json s = summary(dir, "zone");
  EXPECT_GE(s["result"]["ari"].get<double>(), 0.9);
  for (const char* f : {"zones.csv", "zones.svg", "prior_k1.csv", "prior_k3.svg", "mean_profile_k2.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // zone writes only its own outputs.
  EXPECT_FALSE(fs::exists(dir / "coefficients.csv"));
}

TEST(Cli, StagedRunMatchesArtifacts) {
  const auto dir = scratch("staged");
  const std::string out = "--out " + dir.string() + " ";
  ASSERT_EQ(run(out + "simulate --seed 2"), 0);
  for (const char* stage : {"profiles", "smooth", "variogram", "basis"}) ASSERT_EQ(run(out + stage), 0) << stage;
  ASSERT_EQ(run(out + "fit --K 3 --n-init 2"), 0);
  for (const char* f : {"profiles.csv", "coefficients.csv", "fitted.csv", "variogram.csv", "basis.csv",
                        "eigenvalues.csv", "model.json", "assignments.csv", "labels.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_GE(summary(dir, "fit")["result"]["ari"].get<double>(), 0.9);
}
