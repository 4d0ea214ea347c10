#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "modalign/cli.hpp"
#include "modalign/data.hpp"

namespace modalign {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("modalign_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path small_synth() {
    return write("synth.json", R"({"n": 120, "seed": 4})");
  }
  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    args.insert(args.begin(), "modalign");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string err_line() const { return err_.str(); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

bool single_line(const std::string& s) {
  return !s.empty() && s.back() == '\n' && s.find('\n') == s.size() - 1;
}

TEST_F(Cli, TrainWritesAllOutputs) {
  const auto cfg = write("c.json", R"({"epochs": 3, "alignment_spec": "V-A"})");
  const auto out = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", out.string()}),
            kExitOk)
      << err_line();
  EXPECT_TRUE(fs::exists(out / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(out / "metrics.txt"));
  const json m = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["history"].size(), 3u);
  EXPECT_EQ(m["config"]["alignment_spec"], "V-A");
  EXPECT_EQ(m["data"]["n"], 120);
  EXPECT_TRUE(m["final_metrics"].contains("test"));
  EXPECT_TRUE(m.contains("wall_clock_seconds"));
  EXPECT_NE(slurp(out / "metrics.txt").find("acc2_neg_pos"), std::string::npos);
}

TEST_F(Cli, ManifestIsReproducibleApartFromWallClock) {
  const auto cfg = write("c.json", R"({"epochs": 2, "alignment_spec": "T-A/T-V"})");
  std::string manifests[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = dir_ / ("run" + std::to_string(i));
    ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                   "--out", out.string()}),
              kExitOk);
    json m = json::parse(slurp(out / "manifest.json"));
    m.erase("wall_clock_seconds");
    manifests[i] = m.dump();
  }
  EXPECT_EQ(manifests[0], manifests[1]);
}

TEST_F(Cli, SeedFlagOverridesConfigSeed) {
  const auto cfg = write("c.json", R"({"epochs": 1, "seed": 1})");
  const auto out = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", out.string(), "--seed", "9"}),
            kExitOk);
  const json m = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["seed"], 9);
}

TEST_F(Cli, EnvironmentVariableNamesOutputDirectory) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  const auto out = dir_ / "from_env";
  ::setenv(kOutEnvVar, out.string().c_str(), 1);
  const int rc = run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string()});
  ::unsetenv(kOutEnvVar);
  ASSERT_EQ(rc, kExitOk) << err_line();
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST_F(Cli, OutFlagBeatsEnvironment) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  ::setenv(kOutEnvVar, (dir_ / "env").string().c_str(), 1);
  const int rc = run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                      "--out", (dir_ / "flag").string()});
  ::unsetenv(kOutEnvVar);
  ASSERT_EQ(rc, kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "flag" / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir_ / "env"));
}

TEST_F(Cli, BadSpecIsConfigErrorWithPosition) {
  const auto cfg = write("c.json", R"({"epochs": 1, "alignment_spec": "T-A/Q-A"})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:default", "--out",
                 (dir_ / "x").string()}),
            kExitConfig);
  EXPECT_TRUE(single_line(err_line())) << err_line();
  EXPECT_NE(err_line().find("position 4"), std::string::npos) << err_line();
  EXPECT_EQ(err_line().rfind("modalign: error[", 0), 0u);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
}

TEST_F(Cli, UnknownConfigKeyIsConfigError) {
  const auto cfg = write("c.json", R"({"epochs": 1, "learning_rte": 0.1})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:default"}), kExitConfig);
  EXPECT_NE(err_line().find("learning_rte"), std::string::npos);
  EXPECT_TRUE(single_line(err_line()));
}

TEST_F(Cli, MissingConfigFileIsConfigError) {
  EXPECT_EQ(run({"train", "--config", (dir_ / "none.json").string(), "--data", "gen:default"}),
            kExitConfig);
}

TEST_F(Cli, MalformedConfigIsConfigError) {
  const auto cfg = write("c.json", "{\"epochs\": \n");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:default"}), kExitConfig);
  EXPECT_TRUE(single_line(err_line())) << err_line();
}

TEST_F(Cli, UnknownDataPrefixIsConfigError) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "csv:foo"}), kExitConfig);
}

TEST_F(Cli, DegenerateBatchIsDataError) {
  const auto cfg = write("c.json", R"({"epochs": 1, "batch_size": 1, "alignment_spec": "V-A"})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", (dir_ / "x").string()}),
            kExitData);
  EXPECT_NE(err_line().find("error[degenerate-batch]"), std::string::npos) << err_line();
}

TEST_F(Cli, JsonlErrorsAreDataErrors) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data",
                 "jsonl:" + (dir_ / "missing.jsonl").string()}),
            kExitData);
  const auto bad = write("bad.jsonl", R"({"id":"a","label":0.5,"text":[[1]],"audio":[[1]]})" "\n");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "jsonl:" + bad.string()}), kExitData);
  EXPECT_NE(err_line().find("line 1"), std::string::npos) << err_line();
  const auto range =
      write("range.jsonl", R"({"id":"a","label":7.5,"text":[[1]],"audio":[[1]],"vision":[[1]]})" "\n");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "jsonl:" + range.string()}), kExitData);
  EXPECT_TRUE(single_line(err_line()));
}

TEST_F(Cli, TrainsFromJsonl) {
  const auto data = dir_ / "d.jsonl";
  ASSERT_EQ(run({"gen", "--synth", small_synth().string(), "--out", data.string()}), kExitOk);
  EXPECT_EQ(load_jsonl(data, LabelRange{}).size(), 120u);
  const auto cfg = write("c.json", R"({"epochs": 2, "alignment_spec": "T-V"})");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", "jsonl:" + data.string(), "--out",
                 (dir_ / "run").string()}),
            kExitOk)
      << err_line();
}

TEST_F(Cli, NonFiniteLearningRateIsConfigError) {
  const auto cfg = write("c.json", R"({"epochs": 1, "learning_rate": -1})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:default"}), kExitConfig);
}

TEST_F(Cli, DivergenceIsNumericError) {
  const auto cfg = write(
      "c.json", R"({"epochs": 3, "learning_rate": 1e300, "optimizer": "sgd", "alignment_spec": "V-A"})");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", (dir_ / "run").string()}),
            kExitNumeric)
      << err_line();
  EXPECT_NE(err_line().find("error[numeric]"), std::string::npos) << err_line();
  EXPECT_TRUE(single_line(err_line()));
}

TEST_F(Cli, SpecSweepWritesOneRunPerSpec) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  const auto out = dir_ / "sweep";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", out.string(), "--spec-sweep", "V-A,T-A/T-V,"}),
            kExitOk)
      << err_line();
  for (const char* sub : {"V-A", "T-A_T-V", "none"})
    EXPECT_TRUE(fs::exists(out / sub / "manifest.json")) << sub;
  const std::string summary = slurp(out / "sweep.txt");
  EXPECT_NE(summary.find("T-A_T-V"), std::string::npos);
}

TEST_F(Cli, SpecSweepValidatesEverySpecFirst) {
  const auto cfg = write("c.json", R"({"epochs": 1})");
  const auto out = dir_ / "sweep";
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--data", "gen:" + small_synth().string(),
                 "--out", out.string(), "--spec-sweep", "V-A,V-V"}),
            kExitConfig);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, ResumeContinuesToMoreEpochs) {
  const auto synth = small_synth();
  const auto cfg2 = write("c2.json", R"({"epochs": 2, "alignment_spec": "V-A"})");
  const auto cfg4 = write("c4.json", R"({"epochs": 4, "alignment_spec": "V-A"})");
  ASSERT_EQ(run({"train", "--config", cfg2.string(), "--data", "gen:" + synth.string(), "--out",
                 (dir_ / "a").string()}),
            kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg4.string(), "--data", "gen:" + synth.string(), "--out",
                 (dir_ / "b").string(), "--resume", (dir_ / "a" / "checkpoint.json").string()}),
            kExitOk)
      << err_line();
  ASSERT_EQ(run({"train", "--config", cfg4.string(), "--data", "gen:" + synth.string(), "--out",
                 (dir_ / "c").string()}),
            kExitOk);
  json b = json::parse(slurp(dir_ / "b" / "manifest.json"));
  json c = json::parse(slurp(dir_ / "c" / "manifest.json"));
  EXPECT_EQ(b["history"].size(), 4u);
  EXPECT_EQ(b["final_metrics"], c["final_metrics"]);

  const auto other = write("o.json", R"({"epochs": 4, "alignment_spec": "T-A"})");
  EXPECT_EQ(run({"train", "--config", other.string(), "--data", "gen:" + synth.string(), "--out",
                 (dir_ / "d").string(), "--resume", (dir_ / "a" / "checkpoint.json").string()}),
            kExitConfig);
}

TEST_F(Cli, VerifySuitesExitZero) {
  EXPECT_EQ(run({"verify", "ulgm", "--seed", "2"}), kExitOk);
  EXPECT_NE(out_.str().find("all checks passed"), std::string::npos);
  EXPECT_EQ(run({"verify", "optimal-map"}), kExitOk);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"verify", "nothing"}), kExitConfig);
  EXPECT_TRUE(single_line(err_line()));
  EXPECT_EQ(run({"train", "--data", "gen:default"}), kExitConfig);
  EXPECT_EQ(run({"--help"}), kExitOk);
}

}  // namespace
}  // namespace modalign
