#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "boatmatch/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "boat-match");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = boatmatch::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, err.str()};
}

json load(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("boatmatch_cli_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const json& doc) {
    const fs::path p = dir_ / "config.json";
    std::ofstream(p) << doc.dump();
    return p.string();
  }

  static json small_study() {
    return {{"synth", {{"n_control", 150}, {"n_treated", 10}, {"n_covariates", 3}}},
            {"sampler", {{"n_samples", 300}, {"n_warmup", 300}, {"n_chains", 2}}},
            {"vi", {{"n_steps", 2000}}},
            {"uncertainty_draws", 5}};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, PipelineWritesArtifacts) {
  const auto cfg = write_config(small_study());
  const Result r = run_cli({"pipeline", "--config", cfg, "--out", dir_.string(), "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"features.csv", "ground_truth.json", "draws.csv", "diagnostics.json", "scores.csv",
                        "draw_scores.csv", "pairs.csv", "unmatched.csv", "match_summary.json", "balance.json",
                        "effect.json", "table.csv", "run_config.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
  const json d = load(dir_ / "diagnostics.json");
  EXPECT_EQ(d.at("schema_version"), 1);
  EXPECT_TRUE(d.at("converged").get<bool>());
  EXPECT_EQ(load(dir_ / "run_config.json").at("seed"), 5);
}

TEST_F(CliTest, BothMethodsAndBothMatchers) {
  json doc = small_study();
  doc["method"] = "both";
  doc["match"] = {{"method", "both"}};
  const Result r = run_cli({"pipeline", "--config", write_config(doc), "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "guide.json"));
  EXPECT_TRUE(fs::exists(dir_ / "loss.csv"));
  EXPECT_TRUE(load(dir_ / "diagnostics.json").contains("vi_nuts_mean_gap"));
  for (const char* f : {"pairs_caliper.csv", "pairs_nn1.csv", "effect_caliper.json", "effect_nn1.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
}

TEST_F(CliTest, SingleDrawIsNotConverged) {
  const auto cfg = write_config(small_study());
  ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out", dir_.string()}).code, 0);
  const Result r = run_cli({"fit", "--config", cfg, "--out", dir_.string(), "--samples", "1", "--chains", "1"});
  EXPECT_EQ(r.code, 2);
  const json d = load(dir_ / "diagnostics.json");
  EXPECT_FALSE(d.at("converged").get<bool>());
  EXPECT_TRUE(d.at("dimensions").at(0).at("rhat").is_null());
}

TEST_F(CliTest, NearestNeighbourInfeasible) {
  json doc = small_study();
  doc["synth"] = {{"n_control", 6}, {"n_treated", 8}, {"n_covariates", 2}, {"true_beta", 0.0}};
  const auto cfg = write_config(doc);
  ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out", dir_.string()}).code, 0);
  const Result fit = run_cli({"fit", "--config", cfg, "--out", dir_.string()});
  ASSERT_NE(fit.code, 1) << fit.err;
  const Result m = run_cli({"match", "--config", cfg, "--out", dir_.string(), "--match", "nn1"});
  EXPECT_EQ(m.code, 3);
  EXPECT_NE(m.err.find("6 controls < 8 treated"), std::string::npos) << m.err;
}

TEST_F(CliTest, InputErrors) {
  EXPECT_EQ(run_cli({"fit", "--out", dir_.string(), "--features", (dir_ / "missing.csv").string()}).code, 1);
  EXPECT_EQ(run_cli({"pipeline", "--config", write_config({{"bogus", 1}}), "--out", dir_.string()}).code, 1);
  EXPECT_EQ(run_cli({"pipeline", "--method", "mcmc"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, IngestFixture) {
  const std::string fx = BOATMATCH_FIXTURE_DIR;
  const Result r = run_cli({"ingest", "--trips", fx + "/trips.csv", "--assignment", fx + "/assignment.csv",
                            "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_ / "features.csv");
  std::size_t lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  EXPECT_EQ(lines, 5u);
  EXPECT_TRUE(fs::exists(dir_ / "rejects.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "scaling.json"));
}

TEST_F(CliTest, EmptyTripsFile) {
  const fs::path trips = dir_ / "empty.csv";
  std::ofstream(trips).close();
  const std::string fx = BOATMATCH_FIXTURE_DIR;
  const Result r = run_cli({"ingest", "--trips", trips.string(), "--assignment", fx + "/assignment.csv",
                            "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no cycles after filtering"), std::string::npos) << r.err;
}

TEST_F(CliTest, FlagsOverrideConfig) {
  json doc = small_study();
  doc["seed"] = 11;
  doc["match"] = {{"caliper_width", 0.2}};
  const auto cfg = write_config(doc);
  ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out", dir_.string(), "--seed", "12", "--caliper", "0.01"}).code,
            0);
  const json rc = load(dir_ / "run_config.json");
  EXPECT_EQ(rc.at("seed"), 12);
  EXPECT_DOUBLE_EQ(rc.at("match").at("caliper_width").get<double>(), 0.01);
  EXPECT_EQ(rc.at("synth").at("n_control"), 150);
}

TEST(RunConfig, JsonRoundTrip) {
  using boatmatch::cli::RunConfig;
  RunConfig c;
  c.seed = 99;
  c.sampler.n_chains = 3;
  c.match.caliper_width = 0.02;
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.sampler.n_chains, 3u);
  EXPECT_DOUBLE_EQ(back.match.caliper_width, 0.02);
  EXPECT_EQ(back.to_json(), c.to_json());
}
