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

#include "opsq/app/commands.hpp"

#include <cstdlib>
#include <fstream>

#include "opsq/binary_io.hpp"
#include "opsq/error.hpp"

namespace opsq::app {

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kDatasetFile = "dataset.bin";
constexpr const char* kVocabFile = "vocab.tsv";
constexpr const char* kTrainFile = "train.bin";
constexpr const char* kTestFile = "test.bin";
constexpr const char* kMetricsFile = "metrics.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kFailedFile = "FAILED";

std::string run_file(const char* prefix, int run, const char* ext) {
  return std::string(prefix) + std::to_string(run) + ext;
}

nlohmann::json parse_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, path.string() + ": " + e.what());
  }
}

EvalReport evaluate_runs(const std::vector<nn::ModelState<float>>& models, const FeatureSet& test,
                         std::vector<std::string> labels, unsigned threads) {
  if (models.empty()) throw Error(ErrorCode::EmptyList, "no checkpoints to evaluate");
  std::vector<double> accuracies;
  std::optional<EvalReport> first;
  for (const auto& model : models) {
    EvalReport r = evaluate_model(model, test, labels, threads);
    accuracies.push_back(r.metrics.accuracy);
    if (!first) first = std::move(r);
  }
  first->runs = aggregate_runs(accuracies);
  return std::move(*first);
}

}  // namespace

unsigned resolve_threads(unsigned flag) {
  if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0') throw Error(ErrorCode::UsageError, std::string(kThreadsEnv) + " is not an integer");
    flag = static_cast<unsigned>(v);
  }
  return flag == 0 ? 1 : flag;
}

Dataset cmd_ingest(const fs::path& manifest, const fs::path& out, unsigned threads) {
  Dataset ds = load_documents(load_manifest(manifest), threads);
  save_dataset(ds, out);
  return ds;
}

std::vector<TraceDocument> cmd_synth(const SyntheticParams& params, const fs::path& out_dir) {
  auto docs = generate_synthetic_corpus(params);
  write_corpus(docs, out_dir);
  return docs;
}

FeaturizedSplit cmd_featurize(const Dataset& dataset, int n, int max_terms, double test_fraction,
                              std::uint64_t seed, const FeaturizeOutputs& out, unsigned threads) {
  const Split split = stratified_split(dataset.docs, test_fraction, split_seed(seed));
  FeaturizedSplit fs_ = featurize_split(split.train, split.test, n, max_terms,
                                        static_cast<std::uint32_t>(dataset.num_classes()), threads);
  save_vocabulary(fs_.vocab, out.vocab);
  save_feature_set(fs_.train, out.train);
  save_feature_set(fs_.test, out.test);
  return fs_;
}

nn::TrainResult<float> cmd_train(const FeatureSet& data, const nn::ModelConfig& config,
                                 const TrainOutputs& out, unsigned threads) {
  nn::TrainOptions opts;
  opts.threads = threads;
  std::ofstream log;
  if (out.log) {
    log.open(*out.log, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorCode::IoError, "cannot open " + out.log->string());
    log << nn::kTrainLogHeader << std::flush;
    opts.on_epoch = [&log](const nn::EpochLog& e) { log << nn::format_epoch_line(e) << std::flush; };
  }
  auto result = nn::train<float>(data, nn::config_for(data, config), opts);
  if (out.log && !log) throw Error(ErrorCode::IoError, "failed writing " + out.log->string());
  nn::save_checkpoint(result.state, out.checkpoint, out.resume_capable);
  return result;
}

std::vector<std::string> index_labels(std::size_t classes) {
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < classes; ++k) labels.push_back(std::to_string(k));
  return labels;
}

EvalReport evaluate_model(const nn::ModelState<float>& model, const FeatureSet& data,
                          std::vector<std::string> labels, unsigned threads) {
  if (data.count() == 0) throw Error(ErrorCode::EmptyDataset, "no samples to evaluate");
  if (static_cast<int>(data.num_classes) != model.config.classes)
    throw Error(ErrorCode::ShapeMismatch, "feature set has " + std::to_string(data.num_classes) +
                                              " classes, model has " + std::to_string(model.config.classes));
  const auto preds = nn::predict(model, data, threads);
  const auto cm = confusion(preds, data.labels, data.num_classes);
  return make_report(std::move(labels), cm);
}

EvalReport cmd_eval_run_dir(const fs::path& run_dir, unsigned threads) {
  const auto m = parse_json_file(run_dir / kManifestFile);
  try {
    const FeatureSet test = load_feature_set(run_dir / m.at("test_features").get<std::string>());
    std::vector<nn::ModelState<float>> models;
    for (const auto& p : m.at("checkpoints")) models.push_back(nn::load_checkpoint(run_dir / p.get<std::string>()));
    return evaluate_runs(models, test, m.at("labels").get<std::vector<std::string>>(), threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, "malformed run manifest: " + std::string(e.what()));
  }
}

std::vector<SweepRow> cmd_sweep_ngram(const Dataset& dataset, const std::vector<int>& n_values,
                                      const RunConfig& config) {
  if (n_values.empty()) throw Error(ErrorCode::UsageError, "n_values is empty");
  if (config.runs < 1) throw Error(ErrorCode::InvalidParams, "runs must be >= 1");
  for (int n : n_values) validate_gram_order(n);
  const Split split = stratified_split(dataset.docs, config.test_fraction, split_seed(config.seed));
  const auto classes = static_cast<std::uint32_t>(dataset.num_classes());
  std::vector<SweepRow> rows;
  for (int n : n_values) {
    const FeaturizedSplit f = featurize_split(split.train, split.test, n, config.max_terms, classes, config.threads);
    std::vector<double> acc;
    for (int r = 0; r < config.runs; ++r) {
      nn::ModelConfig mc = config.model;
      mc.seed = run_seed(config.seed, r);
      nn::TrainOptions opts;
      opts.threads = config.threads;
      const auto trained = nn::train<float>(f.train, nn::config_for(f.train, mc), opts);
      acc.push_back(evaluate_model(trained.state, f.test, index_labels(classes), config.threads).metrics.accuracy);
    }
    rows.push_back({n, aggregate_runs(acc)});
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "n,mean,max,min\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.n, r.summary.mean, r.summary.max, r.summary.min);
    out += buf;
  }
  return out;
}

nlohmann::ordered_json cmd_compare(const std::vector<fs::path>& reports, bool anova) {
  if (reports.empty()) throw Error(ErrorCode::UsageError, "no reports given");
  nlohmann::ordered_json out;
  out["reports"] = nlohmann::ordered_json::array();
  std::vector<std::vector<double>> groups;
  for (const auto& path : reports) {
    std::vector<double> values;
    try {
      values = run_values_from_report(parse_json_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadFormat, path.string() + ": " + e.what());
    }
    const RunSummary s = aggregate_runs(values);
    nlohmann::ordered_json entry;
    entry["path"] = path.string();
    entry["mean"] = s.mean;
    entry["max"] = s.max;
    entry["min"] = s.min;
    entry["values"] = s.values;
    out["reports"].push_back(std::move(entry));
    groups.push_back(std::move(values));
  }
  if (anova)
    out["anova"] = anova_to_json(anova_oneway(groups));
  else
    out["anova"] = nullptr;
  return out;
}

nn::GradcheckReport cmd_gradcheck(std::uint64_t seed, const nn::GradcheckHooks& hooks) {
  return nn::run_gradcheck(seed, hooks);
}

PipelineResult cmd_pipeline(const RunConfig& config, const fs::path& run_dir) {
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + run_dir.string() + ": " + ec.message());
  fs::remove(run_dir / kFailedFile, ec);
  try {
    if (config.runs < 1) throw Error(ErrorCode::InvalidParams, "runs must be >= 1");
    save_run_config(config, run_dir / kConfigFile);
    const Dataset ds = cmd_ingest(config.manifest, run_dir / kDatasetFile, config.threads);
    const FeaturizedSplit f = cmd_featurize(ds, config.n, config.max_terms, config.test_fraction, config.seed,
                                            {run_dir / kVocabFile, run_dir / kTrainFile, run_dir / kTestFile},
                                            config.threads);

    nlohmann::ordered_json manifest;
    manifest["format_version"] = kRunConfigVersion;
    manifest["config"] = kConfigFile;
    manifest["dataset"] = kDatasetFile;
    manifest["vocabulary"] = kVocabFile;
    manifest["vocabulary_stats"] = std::string(kVocabFile) + ".stats";
    manifest["train_features"] = kTrainFile;
    manifest["test_features"] = kTestFile;
    manifest["checkpoints"] = nlohmann::ordered_json::array();
    manifest["train_logs"] = nlohmann::ordered_json::array();

    std::vector<nn::ModelState<float>> models;
    for (int r = 0; r < config.runs; ++r) {
      const std::string ckpt = run_file("model_run", r, ".ckpt");
      const std::string log = run_file("train_log_run", r, ".csv");
      nn::ModelConfig mc = config.model;
      mc.seed = run_seed(config.seed, r);
      models.push_back(cmd_train(f.train, mc, {run_dir / ckpt, run_dir / log, false}, config.threads).state);
      manifest["checkpoints"].push_back(ckpt);
      manifest["train_logs"].push_back(log);
    }
    EvalReport report = evaluate_runs(models, f.test, ds.label_names, config.threads);
    write_file(run_dir / kMetricsFile, dump_json(report_to_json(report)));
    manifest["metrics"] = kMetricsFile;
    manifest["labels"] = ds.label_names;
    write_file(run_dir / kManifestFile, manifest.dump(2) + "\n");
    return {run_dir, std::move(report)};
  } catch (const std::exception& e) {
    std::ofstream(run_dir / kFailedFile, std::ios::binary) << e.what() << "\n";
    throw;
  }
}

}  // namespace opsq::app
