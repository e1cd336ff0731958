// Copyright 2026 The opsq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "opsq/app/commands.hpp"
#include "opsq/binary_io.hpp"
#include "support.hpp"

namespace opsq::app {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

// A small four-family corpus shared by every test in the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    const auto r = run({"synth", "--families", "4", "--docs", "10", "--len", "80", "--seed", "5", "--out-dir",
                        (*dir_ / "corpus").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path corpus() { return *dir_ / "corpus"; }
  static fs::path manifest() { return corpus() / "manifest.csv"; }

  std::vector<std::string> fast_model() { return {"--small", "--epochs", "2"}; }

  CliResult pipeline(const fs::path& run_dir, int runs = 2, int epochs = 2) {
    return run({"pipeline", "--manifest", manifest().string(), "--run-dir", run_dir.string(), "--seed", "9",
                "--runs", std::to_string(runs), "--small", "--epochs", std::to_string(epochs)});
  }

  testing::TempDir tmp_;
  static testing::TempDir* dir_;
};

testing::TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, StepByStepChain) {
  const auto ds = tmp_ / "ds.bin";
  auto r = run({"ingest", "--manifest", manifest().string(), "--out", ds.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "ingested 40 documents, 4 families\n");

  r = run({"featurize", "--dataset", ds.string(), "--seed", "3", "--vocab-out", (tmp_ / "v.tsv").string(), "--out",
           (tmp_ / "train.bin").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(tmp_ / "v.tsv.stats"));
  const FeatureSet train = load_feature_set(tmp_ / "train.bin");
  const FeatureSet test = load_feature_set(tmp_ / "train.bin.test");
  EXPECT_EQ(train.count(), 32u);
  EXPECT_EQ(test.count(), 8u);
  EXPECT_EQ(load_vocabulary(tmp_ / "v.tsv").size() * 2 <= train.height * train.width, true);

  std::vector<std::string> args{"train", "--features", (tmp_ / "train.bin").string(), "--seed", "3", "--out",
                                (tmp_ / "m.ckpt").string(), "--log", (tmp_ / "log.csv").string()};
  for (auto& a : fast_model()) args.push_back(a);
  r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string log = read_file(tmp_ / "log.csv");
  EXPECT_EQ(log.rfind(nn::kTrainLogHeader, 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const auto model = nn::load_checkpoint(tmp_ / "m.ckpt");
  EXPECT_EQ(model.config.seed, run_seed(3, 0));
  EXPECT_EQ(model.config.epochs, 2);
  EXPECT_EQ(model.config.conv_filters, (std::vector<int>{4, 8, 8}));

  r = run({"eval", "--model", (tmp_ / "m.ckpt").string(), "--features", (tmp_ / "train.bin.test").string(),
           "--dataset", ds.string(), "--report", (tmp_ / "rep.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(tmp_ / "rep.json");
  EXPECT_EQ(rep["per_class"][0]["label"], "family00");
  EXPECT_EQ(rep["per_class"].size(), 4u);
  std::int64_t total = 0;
  for (auto v : rep["confusion"]) total += v.get<std::int64_t>();
  EXPECT_EQ(total, 8);

  r = run({"eval", "--model", (tmp_ / "m.ckpt").string(), "--features", (tmp_ / "train.bin.test").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["per_class"][3]["label"], "3");
}

TEST_F(Cli, PipelineArtifactsAndDeterminism) {
  auto r = pipeline(tmp_ / "a");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.json", "dataset.bin", "vocab.tsv", "vocab.tsv.stats", "train.bin", "test.bin",
                        "model_run0.ckpt", "model_run1.ckpt", "train_log_run0.csv", "train_log_run1.csv",
                        "metrics.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(tmp_ / "a" / f)) << f;
  EXPECT_FALSE(fs::exists(tmp_ / "a" / "FAILED"));
  const auto manifest_json = read_json(tmp_ / "a" / "manifest.json");
  EXPECT_EQ(manifest_json["checkpoints"].size(), 2u);
  EXPECT_EQ(manifest_json["labels"][0], "family00");
  const auto metrics = read_json(tmp_ / "a" / "metrics.json");
  EXPECT_EQ(metrics["runs"]["values"].size(), 2u);

  ASSERT_EQ(pipeline(tmp_ / "b").code, 0);
  EXPECT_EQ(read_file(tmp_ / "a" / "metrics.json"), read_file(tmp_ / "b" / "metrics.json"));
  EXPECT_EQ(read_file(tmp_ / "a" / "model_run1.ckpt"), read_file(tmp_ / "b" / "model_run1.ckpt"));

  r = run({"eval", "--run-dir", (tmp_ / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read_file(tmp_ / "a" / "metrics.json"));

  r = run({"pipeline", "--config", (tmp_ / "a" / "config.json").string(), "--run-dir", (tmp_ / "c").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(tmp_ / "a" / "metrics.json"), read_file(tmp_ / "c" / "metrics.json"));
  EXPECT_EQ(read_file(tmp_ / "a" / "config.json"), read_file(tmp_ / "c" / "config.json"));
}

TEST_F(Cli, PipelineRunCount) {
  const auto r = pipeline(tmp_ / "r", 7, 1);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = read_json(tmp_ / "r" / "metrics.json");
  ASSERT_EQ(metrics["runs"]["values"].size(), 7u);
  double lo = 1, hi = 0;
  for (auto v : metrics["runs"]["values"]) lo = std::min(lo, v.get<double>()), hi = std::max(hi, v.get<double>());
  EXPECT_EQ(metrics["runs"]["min"].get<double>(), lo);
  EXPECT_EQ(metrics["runs"]["max"].get<double>(), hi);
  EXPECT_EQ(load_run_config(tmp_ / "r" / "config.json").runs, 7);
}

TEST_F(Cli, PipelineFailureLeavesMarker) {
  write_file(tmp_ / "bad.csv", "path,label\nmissing.trace,x\nalso_missing.trace,y\n");
  const auto r = run({"pipeline", "--manifest", (tmp_ / "bad.csv").string(), "--run-dir", (tmp_ / "f").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("ERROR:MissingFile:", 0), 0u) << r.err;
  ASSERT_TRUE(fs::exists(tmp_ / "f" / "FAILED"));
  EXPECT_FALSE(read_file(tmp_ / "f" / "FAILED").empty());
  EXPECT_FALSE(fs::exists(tmp_ / "f" / "manifest.json"));

  const auto ok = pipeline(tmp_ / "f", 1, 1);
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_FALSE(fs::exists(tmp_ / "f" / "FAILED"));
}

TEST_F(Cli, SweepSingleRun) {
  const auto ds = tmp_ / "ds.bin";
  ASSERT_EQ(run({"ingest", "--manifest", manifest().string(), "--out", ds.string()}).code, 0);
  const auto r = run({"sweep-ngram", "--dataset", ds.string(), "--n-values", "8,6", "--runs", "1", "--seed", "2",
                      "--small", "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "n,mean,max,min");
  std::vector<int> ns;
  while (std::getline(lines, line)) {
    double mean, max, min;
    int n;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &n, &mean, &max, &min), 4) << line;
    EXPECT_EQ(mean, max);
    EXPECT_EQ(mean, min);
    ns.push_back(n);
  }
  EXPECT_EQ(ns, (std::vector<int>{8, 6}));

  RunConfig cfg;
  EXPECT_EQ(testing::code_of([&] { cmd_sweep_ngram(load_dataset(ds), {}, cfg); }), ErrorCode::UsageError);
  EXPECT_EQ(testing::code_of([&] { cmd_sweep_ngram(load_dataset(ds), {11}, cfg); }), ErrorCode::InvalidN);
  const auto bad = run({"sweep-ngram", "--dataset", ds.string(), "--n-values", "", "--seed", "2"});
  EXPECT_NE(bad.code, 0);
  EXPECT_EQ(bad.err.rfind("ERROR:", 0), 0u);
}

TEST_F(Cli, CompareWithAnova) {
  write_file(tmp_ / "a.json", R"({"accuracy":0.5,"runs":{"mean":2,"max":3,"min":1,"values":[1,2,3]}})");
  write_file(tmp_ / "b.json", R"({"accuracy":0.5,"runs":{"mean":3,"max":4,"min":2,"values":[2,3,4]}})");
  auto r = run({"compare", "--reports", (tmp_ / "a.json").string(), (tmp_ / "b.json").string(), "--anova"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["reports"].size(), 2u);
  EXPECT_EQ(j["reports"][1]["mean"].get<double>(), 3.0);
  EXPECT_NEAR(j["anova"]["F"].get<double>(), 1.5, 1e-12);
  EXPECT_EQ(j["anova"]["df1"], 1);
  EXPECT_EQ(j["anova"]["df2"], 4);

  r = run({"compare", "--reports", (tmp_ / "a.json").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(r.out)["anova"].is_null());

  r = run({"compare", "--reports", (tmp_ / "a.json").string(), "--anova"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("ERROR:TooFewGroups:", 0), 0u) << r.err;
}

TEST_F(Cli, Gradcheck) {
  const auto r = run({"gradcheck", "--seed", "4"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("ERROR:UsageError:", 0), 0u);
  r = run({"train", "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("ERROR:UsageError:", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  r = run({"eval"});
  EXPECT_EQ(r.code, 2);
  r = run({"eval", "--model", (tmp_ / "nope.ckpt").string(), "--features", (tmp_ / "nope.bin").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("ERROR:", 0), 0u);
  r = run({"pipeline", "--run-dir", (tmp_ / "x").string()});
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, HelpShowsDefaults) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"ingest", "synth", "featurize", "train", "eval", "sweep-ngram", "compare", "gradcheck",
                          "pipeline"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  r = run({"pipeline", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("[200]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("[0.3]"), std::string::npos);
  EXPECT_NE(r.out.find("[2048]"), std::string::npos);
}

TEST(ResolveThreads, EnvironmentOverride) {
  ::unsetenv(kThreadsEnv);
  EXPECT_EQ(resolve_threads(4), 4u);
  EXPECT_EQ(resolve_threads(0), 1u);
  ::setenv(kThreadsEnv, "3", 1);
  EXPECT_EQ(resolve_threads(1), 3u);
  ::setenv(kThreadsEnv, "0", 1);
  EXPECT_EQ(resolve_threads(5), 1u);
  ::setenv(kThreadsEnv, "many", 1);
  EXPECT_EQ(testing::code_of([] { resolve_threads(1); }), ErrorCode::UsageError);
  ::unsetenv(kThreadsEnv);
}

TEST(RunConfigJson, RoundTrip) {
  RunConfig c = RunConfig::small_preset();
  c.seed = 77;
  c.manifest = "/x/m.csv";
  c.model.conv_filters = {3, 5, 7};
  EXPECT_EQ(run_config_from_json(run_config_to_json(c)), c);
  auto j = run_config_to_json(c);
  j["format_version"] = 99;
  EXPECT_EQ(testing::code_of([&] { run_config_from_json(j); }), ErrorCode::BadFormat);
  EXPECT_EQ(split_seed(5), split_seed(5));
  EXPECT_NE(run_seed(5, 0), run_seed(5, 1));
  EXPECT_NE(run_seed(5, 0), split_seed(5));
}

}  // namespace
}  // namespace opsq::app
