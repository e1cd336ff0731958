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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "opsq/app/run_config.hpp"
#include "opsq/eval.hpp"
#include "opsq/features.hpp"
#include "opsq/nn/gradcheck.hpp"
#include "opsq/nn/train.hpp"
#include "opsq/report.hpp"
#include "opsq/trace_ingest.hpp"

namespace opsq::app {

namespace fs = std::filesystem;

inline constexpr const char* kThreadsEnv = "OPSQ_THREADS";

/// `OPSQ_THREADS` when set, else `flag`. Zero is clamped to one.
unsigned resolve_threads(unsigned flag);

Dataset cmd_ingest(const fs::path& manifest, const fs::path& out, unsigned threads);
std::vector<TraceDocument> cmd_synth(const SyntheticParams& params, const fs::path& out_dir);

struct FeaturizeOutputs {
  fs::path vocab;
  fs::path train;
  fs::path test;
};

/// Splits the dataset, fits the vocabulary on the train split and writes the
/// vocabulary plus both feature files.
FeaturizedSplit cmd_featurize(const Dataset& dataset, int n, int max_terms, double test_fraction,
                              std::uint64_t seed, const FeaturizeOutputs& out, unsigned threads);

struct TrainOutputs {
  fs::path checkpoint;
  std::optional<fs::path> log;
  bool resume_capable = false;
};

/// Trains one model. `config.seed` is the model seed; the input shape and
/// class count are taken from `data`.
nn::TrainResult<float> cmd_train(const FeatureSet& data, const nn::ModelConfig& config,
                                 const TrainOutputs& out, unsigned threads);

EvalReport evaluate_model(const nn::ModelState<float>& model, const FeatureSet& data,
                          std::vector<std::string> labels, unsigned threads);
std::vector<std::string> index_labels(std::size_t classes);

/// Re-evaluates every checkpoint listed in a run directory's manifest.
EvalReport cmd_eval_run_dir(const fs::path& run_dir, unsigned threads);

struct SweepRow {
  int n = 0;
  RunSummary summary;
};

/// One independent model per (n, run); run r uses the run-indexed seed.
std::vector<SweepRow> cmd_sweep_ngram(const Dataset& dataset, const std::vector<int>& n_values,
                                      const RunConfig& config);
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

/// Per-report run summaries and, when `anova` is set, one-way ANOVA across the
/// reports' per-run accuracies.
nlohmann::ordered_json cmd_compare(const std::vector<fs::path>& reports, bool anova);

nn::GradcheckReport cmd_gradcheck(std::uint64_t seed, const nn::GradcheckHooks& hooks = {});

struct PipelineResult {
  fs::path run_dir;
  EvalReport report;
};

/// Full pipeline into `run_dir`. On error a `FAILED` marker holding the
/// message is left behind and the error is rethrown.
PipelineResult cmd_pipeline(const RunConfig& config, const fs::path& run_dir);

/// Parses `args` (without the program name) and dispatches. Returns the exit
/// code; errors are printed to `err` as `ERROR:<code>:<message>`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace opsq::app
