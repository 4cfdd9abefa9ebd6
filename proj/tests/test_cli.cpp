#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sliceguard/cli.hpp"
#include "testing.hpp"

using namespace sliceguard;
using testing_support::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sliceguard");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Short runs and a small network so the whole pipeline stays quick.
std::string small_config(const TempDir& dir) {
  const auto p = dir / "config.json";
  write(p, R"({"network": {"emulation_duration": 300, "attack_start": 150},
               "arch": {"encoder": [16, 8], "decoder": [8, 16]},
               "train": {"max_epochs": 8, "patience": 3},
               "dataset": {"total_records": 400}})");
  return p;
}

}  // namespace

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  const auto v = invoke({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_EQ(v.out, std::string(SLICEGUARD_VERSION) + "\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"simulate", "--scenario", "rsa"}).code, 2);
  EXPECT_EQ(invoke({"simulate", "--scenario", "rsa", "--out", "x", "--bogus"}).code, 2);
  EXPECT_EQ(invoke({"simulate", "--scenario", "nope", "--out", "x"}).code, 2);
}

TEST(Cli, InvalidConfigExitsOne) {
  TempDir d;
  const auto r = invoke({"dataset", "build", "--contamination", "0.5", "--labeled", "0.6", "--out", d / "ds.csv"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("labeled_positive_fraction"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(d / "ds.csv"));

  write(d / "bad.json", R"({"train": {"bogus": 1}})");
  const auto u = invoke({"--config", d / "bad.json", "simulate", "--scenario", "benign", "--out", d / "t.jsonl"});
  EXPECT_EQ(u.code, 1);
  EXPECT_NE(u.err.find("train.bogus"), std::string::npos);
  write(d / "broken.json", "{");
  EXPECT_EQ(invoke({"--config", d / "broken.json", "selfcheck"}).code, 1);
}

TEST(Cli, OutputsAreWriteOnce) {
  TempDir d;
  const auto cfg = small_config(d);
  const auto t = d / "t.jsonl";
  ASSERT_EQ(invoke({"--config", cfg, "--quiet", "simulate", "--scenario", "tsa", "--out", t}).code, 0);
  const auto before = file_digest(t);
  const auto again = invoke({"--config", cfg, "--seed", "9", "simulate", "--scenario", "rsa", "--out", t});
  EXPECT_EQ(again.code, 1);
  EXPECT_EQ(file_digest(t), before);
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir d;
  const auto cfg = small_config(d);
  const auto t = d / "t.jsonl";
  ASSERT_EQ(invoke({"--config", cfg, "--quiet", "simulate", "--scenario", "benign", "--duration", "120",
                    "--attack-start", "60", "--out", t})
                .code,
            0);
  const auto m = nlohmann::json::parse(read_file(t + ".manifest.json"));
  EXPECT_EQ(m["config"]["network"]["emulation_duration"], 120.0);
  EXPECT_EQ(m["config"]["network"]["num_ues"], 92);
}

TEST(Cli, ManifestRecordsDigestsAndSeeds) {
  TempDir d;
  const auto cfg = small_config(d);
  const auto t = d / "t.jsonl";
  ASSERT_EQ(invoke({"--config", cfg, "--seed", "5", "--quiet", "simulate", "--scenario", "rsa", "--out", t}).code, 0);
  const auto m = nlohmann::json::parse(read_file(t + ".manifest.json"));
  EXPECT_EQ(m["format"], "sliceguard-manifest/1");
  EXPECT_EQ(m["seeds"]["run"], 5);
  EXPECT_EQ(m["outputs"][0]["sha256"], file_digest(t));
  EXPECT_EQ(m["tool_version"], SLICEGUARD_VERSION);
  EXPECT_TRUE(m.contains("wall_clock_seconds"));
}

TEST(Cli, SameSeedSameTrace) {
  TempDir d;
  const auto cfg = small_config(d);
  for (const char* name : {"a.jsonl", "b.jsonl"})
    ASSERT_EQ(invoke({"--config", cfg, "--seed", "3", "--quiet", "simulate", "--scenario", "tsa", "--out", d / name}).code, 0);
  EXPECT_EQ(file_digest(d / "a.jsonl"), file_digest(d / "b.jsonl"));
}

TEST(Cli, PipelineFromTraceToVerdicts) {
  TempDir d;
  const auto cfg = small_config(d);
  auto ok = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--config", cfg, "--seed", "2", "--quiet"});
    const auto r = invoke(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return r.code == 0;
  };
  ASSERT_TRUE(ok({"simulate", "--scenario", "rsa", "--out", d / "t.jsonl"}));
  ASSERT_TRUE(ok({"features", "--trace", d / "t.jsonl", "--out", d / "f.csv"}));
  const auto side = nlohmann::json::parse(read_file(d / "f.csv.json"));
  EXPECT_EQ(side["trace_digest"], nlohmann::json::parse(read_file(d / "t.jsonl.manifest.json"))["result"]["trace_digest"]);

  ASSERT_TRUE(ok({"dataset", "build", "--contamination", "0.2", "--out", d / "ds.csv"}));
  const auto meta = nlohmann::json::parse(read_file(d / "ds.csv.json"));
  EXPECT_EQ(meta["counts"]["total"], 400);
  EXPECT_EQ(meta["counts"]["rsa"], 40);
  ASSERT_TRUE(ok({"dataset", "pca", "--in", d / "ds.csv", "--out", d / "pca.csv"}));

  ASSERT_TRUE(ok({"train", "--data", d / "ds.csv", "--out", d / "det.json"}));
  ASSERT_TRUE(ok({"classify", "--model", d / "det.json", "--data", d / "f.csv", "--out", d / "v.csv"}));
  ASSERT_TRUE(ok({"baseline", "classify", "--model", d / "det.json", "--data", d / "ds.csv", "--calibrate", "--out",
                  d / "b.csv"}));
  std::ifstream v(d / "v.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(v, line)) ++rows;
  EXPECT_EQ(rows, 301u);  // header + one per window

  EXPECT_EQ(invoke({"baseline", "classify", "--model", d / "det.json", "--data", d / "ds.csv", "--calibrate",
                    "--alpha", "0.2", "--out", d / "c.csv"})
                .code,
            2);
}

TEST(Cli, SelfcheckPasses) {
  const auto r = invoke({"selfcheck"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS gradient-check"), std::string::npos);
}
