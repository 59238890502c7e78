// Drives the tmrec binary end to end on small synthetic data.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "tmrec/bench.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / ("tmrec_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

struct Run {
  int code;
  std::string err;
};

Run tmrec_run(const std::string& args) {
  const auto err_path = workdir() / "stderr.txt";
  const std::string cmd = std::string(TMREC_CLI_PATH) + " " + args + " >/dev/null 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kData =
    "--synthetic --syn-customers 800 --syn-items 24 --syn-features 8 --cutoff-days 20 --classes 16 "
    "--rank 4 --als-sweeps 4 --history 3 --seed 7";

std::string out(const std::string& name) { return (workdir() / name).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(tmrec_run("prepare " + kData + " --out " + out("a")).code, 0);
    ASSERT_EQ(tmrec_run("train --out " + out("a") + " --model tm --clauses 20 --epochs 4 --seed 7").code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(workdir()); }
};

TEST_F(Cli, PrepareWritesManifestAndResolvedConfig) {
  for (const char* f : {"prepared/manifest.json", "prepared/schema.json", "prepared/universe.json",
                        "prepared/factors.json", "prepared/train_examples.csv", "prepared/test_examples.csv",
                        "prepared/eval_customers.csv", "prepare.config.ini"}) {
    EXPECT_TRUE(fs::exists(workdir() / "a" / f)) << f;
  }
  const auto manifest = json::parse(slurp(workdir() / "a/prepared/manifest.json"));
  EXPECT_EQ(manifest["format"], "tmrec.manifest");
  EXPECT_NE(slurp(workdir() / "a/prepare.config.ini").find("classes=16"), std::string::npos);
}

TEST_F(Cli, PrepareRerunIsByteIdentical) {
  ASSERT_EQ(tmrec_run("prepare " + kData + " --out " + out("b")).code, 0);
  for (const auto& e : fs::directory_iterator(workdir() / "a/prepared")) {
    EXPECT_EQ(slurp(e.path()), slurp(workdir() / "b/prepared" / e.path().filename())) << e.path();
  }
}

TEST_F(Cli, ConfigFileReproducesTheRun) {
  ASSERT_EQ(tmrec_run("prepare --config " + out("a") + "/prepare.config.ini --out " + out("c")).code, 0);
  EXPECT_EQ(slurp(workdir() / "a/prepared/manifest.json"), slurp(workdir() / "c/prepared/manifest.json"));
}

TEST_F(Cli, MissingInputIsExitTwoWithPath) {
  const auto r = tmrec_run("prepare --data /no/such/dir --out " + out("x"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/no/such/dir"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("dataset"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorIsExitOne) {
  EXPECT_EQ(tmrec_run("train --no-such-flag").code, 1);
  EXPECT_EQ(tmrec_run("").code, 1);
  EXPECT_EQ(tmrec_run("train --model forest").code, 1);
}

TEST_F(Cli, TsetlinLogRecordsHighAccuracy) {
  std::ifstream in(workdir() / "a/train_log_tm.jsonl");
  std::string line, last;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    last = line;
    ++n;
  }
  ASSERT_EQ(n, 4U);
  EXPECT_GE(json::parse(last)["test_accuracy"].get<double>(), 0.95);
}

TEST_F(Cli, NetworkLossDecreasesOverFiveEpochs) {
  ASSERT_EQ(tmrec_run("train --out " + out("a") + " --model mlp --epochs 5 --hidden 16 --learning-rate 0.2").code, 0);
  std::ifstream in(workdir() / "a/train_log_mlp.jsonl");
  std::string line;
  std::vector<double> losses;
  while (std::getline(in, line)) losses.push_back(json::parse(line)["loss"].get<double>());
  ASSERT_EQ(losses.size(), 5U);
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]);
}

TEST_F(Cli, TrainRerunGivesIdenticalModel) {
  const auto before = slurp(workdir() / "a/model_tm.bin");
  ASSERT_EQ(tmrec_run("train --out " + out("a") + " --model tm --clauses 20 --epochs 4 --seed 7").code, 0);
  EXPECT_EQ(before, slurp(workdir() / "a/model_tm.bin"));
}

TEST_F(Cli, PopularityEvaluationIsPositiveAndStable) {
  ASSERT_EQ(tmrec_run("train --out " + out("a") + " --model popularity").code, 0);
  ASSERT_EQ(tmrec_run("evaluate --out " + out("a") + " --model popularity").code, 0);
  const auto first = slurp(workdir() / "a/metrics_popularity.json");
  ASSERT_EQ(tmrec_run("evaluate --out " + out("a") + " --model popularity").code, 0);
  EXPECT_EQ(first, slurp(workdir() / "a/metrics_popularity.json"));
  const auto j = json::parse(first);
  ASSERT_EQ(j["map"].size(), 3U);
  EXPECT_EQ(j["map"][1]["k"], 12);
  EXPECT_GT(j["map"][1]["value"].get<double>(), 0.0);
}

TEST_F(Cli, EvaluateReportsConfiguredCutoffs) {
  ASSERT_EQ(tmrec_run("evaluate --out " + out("a") + " --model tm --map-k 1,5,12,100").code, 0);
  const auto j = json::parse(slurp(workdir() / "a/metrics_tm.json"));
  ASSERT_EQ(j["map"].size(), 4U);
  EXPECT_EQ(j["map"][1]["k"], 5);
  EXPECT_TRUE(fs::exists(workdir() / "a/metrics.txt"));
}

TEST_F(Cli, SchemaMismatchIsExitThree) {
  auto other = kData;
  other.replace(other.find("--seed 7"), 8, "--seed 8");
  ASSERT_EQ(tmrec_run("prepare " + other + " --out " + out("d")).code, 0);
  fs::copy_file(workdir() / "a/model_tm.bin", workdir() / "d/model_tm.bin", fs::copy_options::overwrite_existing);
  const auto r = tmrec_run("evaluate --out " + out("d") + " --model tm");
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, TamperedArtifactIsExitThree) {
  ASSERT_EQ(tmrec_run("prepare " + kData + " --out " + out("e")).code, 0);
  std::ofstream(workdir() / "e/prepared/test_examples.csv", std::ios::app) << "\n";
  EXPECT_EQ(tmrec_run("train --out " + out("e") + " --model popularity").code, 3);
}

TEST_F(Cli, ExplainTsetlinWritesParsableFiles) {
  ASSERT_EQ(tmrec_run("explain --out " + out("a") + " --model tm --samples 3 --permutations 100").code, 0);
  const auto dir = workdir() / "a/explain_tm";
  EXPECT_EQ(slurp(dir / "clauses.csv").rfind("class,clause,polarity,literal,name", 0), 0U);
  const auto stats = json::parse(slurp(dir / "inclusion_stats.json"));
  EXPECT_GT(stats["classes"].size(), 0U);
  std::ifstream in(dir / "explanations.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_TRUE(json::parse(line).contains("predicted"));
    ++n;
  }
  EXPECT_EQ(n, 3U);
  EXPECT_TRUE(fs::exists(dir / "beeswarm.csv"));
}

TEST_F(Cli, ShapleyRunsForNetworkAndTsetlin) {
  ASSERT_EQ(tmrec_run("train --out " + out("a") + " --model lr --epochs 2").code, 0);
  ASSERT_EQ(tmrec_run("explain --out " + out("a") + " --model lr --samples 2 --permutations 100").code, 0);
  ASSERT_EQ(tmrec_run("explain --out " + out("a") + " --model tm --samples 2 --permutations 100").code, 0);
  for (const char* kind : {"lr", "tm"}) {
    std::ifstream in(workdir() / "a" / ("explain_" + std::string(kind)) / "shapley.jsonl");
    std::string line;
    ASSERT_TRUE(std::getline(in, line)) << kind;
    const auto j = json::parse(line);
    double sum = 0.0;
    for (const auto& f : j["features"]) sum += f["attribution"].get<double>();
    EXPECT_NEAR(sum, j["prediction"].get<double>() - j["baseline"].get<double>(), 1e-9) << kind;
  }
  EXPECT_TRUE(fs::exists(workdir() / "a/explain_lr/weights.txt"));
}

TEST_F(Cli, BenchWithTwoItemCounts) {
  ASSERT_EQ(tmrec_run("bench " + kData + " --out " + out("f") + " --model tm --clauses 6 --epochs 2 --item-counts 4,12")
                .code,
            0);
  const auto report =
      tmrec::scaling_report_from_json(json::parse(slurp(workdir() / "f/bench_tm/report.json")));
  ASSERT_EQ(report.rows.size(), 2U);
  ASSERT_TRUE(report.rows[0].relative);
  EXPECT_EQ(report.rows[0].relative->train_epochs, 1.0);
  EXPECT_TRUE(fs::exists(workdir() / "f/bench_tm/report.csv"));
  EXPECT_TRUE(fs::exists(workdir() / "f/bench_tm/report.txt"));
}

TEST_F(Cli, SynthWritesLoadableTables) {
  ASSERT_EQ(tmrec_run("synth --syn-customers 50 --syn-items 10 --out " + out("g")).code, 0);
  ASSERT_EQ(tmrec_run("prepare --data " + out("g") + " --cutoff-days 20 --classes 5 --rank 2 --als-sweeps 2 --out " +
                      out("h"))
                .code,
            0);
}

}  // namespace
