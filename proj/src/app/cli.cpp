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

#include <ostream>

#include "CLI11.hpp"
#include "opsq/app/commands.hpp"
#include "opsq/binary_io.hpp"
#include "opsq/error.hpp"

namespace opsq::app {

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

void add_threads(CLI::App* sub, unsigned& threads) {
  sub->add_option("--threads", threads, "Worker threads; 1 is fully deterministic (env OPSQ_THREADS overrides)");
}

void add_model_flags(CLI::App* sub, nn::ModelConfig& c) {
  sub->add_option("--filters", c.conv_filters, "Filters per convolution stage")->delimiter(',');
  sub->add_option("--kernel", c.conv_kernel, "Convolution kernel size");
  sub->add_option("--pool-kernel", c.pool_kernel, "Max-pool kernel");
  sub->add_option("--pool-stride", c.pool_stride, "Max-pool stride");
  sub->add_option("--hidden", c.lstm_hidden, "LSTM hidden units");
  sub->add_option("--depth", c.lstm_depth, "Stacked LSTM layers");
  sub->add_option("--dropout", c.dropout, "Dropout rate between LSTM layers");
  sub->add_option("--window", c.window, "Maximum sequence length fed to the LSTM");
  sub->add_option("--epochs", c.epochs, "Training epochs");
  sub->add_option("--batch", c.batch, "Mini-batch size");
  sub->add_option("--lr", c.lr, "Adam learning rate");
}

// With --small the preset replaces every model flag the user did not give.
nn::ModelConfig resolve_model(const CLI::App& sub, const nn::ModelConfig& parsed, bool small) {
  if (!small) return parsed;
  nn::ModelConfig c = nn::ModelConfig::small();
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (given("--filters")) c.conv_filters = parsed.conv_filters;
  if (given("--kernel")) c.conv_kernel = parsed.conv_kernel;
  if (given("--pool-kernel")) c.pool_kernel = parsed.pool_kernel;
  if (given("--pool-stride")) c.pool_stride = parsed.pool_stride;
  if (given("--hidden")) c.lstm_hidden = parsed.lstm_hidden;
  if (given("--depth")) c.lstm_depth = parsed.lstm_depth;
  if (given("--dropout")) c.dropout = parsed.dropout;
  if (given("--window")) c.window = parsed.window;
  if (given("--epochs")) c.epochs = parsed.epochs;
  if (given("--batch")) c.batch = parsed.batch;
  if (given("--lr")) c.lr = parsed.lr;
  return c;
}

// Applies the --small preset to run-level settings the user left unset.
void resolve_run(const CLI::App& sub, RunConfig& rc, bool small) {
  rc.small = small;
  rc.model = resolve_model(sub, rc.model, small);
  if (!small) return;
  const RunConfig preset = RunConfig::small_preset();
  if (sub.count("--runs") == 0) rc.runs = preset.runs;
  if (sub.count("--max-terms") == 0) rc.max_terms = preset.max_terms;
}

void emit(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty())
    out << text;
  else
    write_file(path, text);
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Malware family classification from opcode/API-call traces", "opsq"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  unsigned threads = 1;

  // ingest
  std::string manifest_path, dataset_out;
  auto* ingest = app.add_subcommand("ingest", "Load a manifest of trace files into a dataset binary");
  ingest->add_option("--manifest", manifest_path, "CSV manifest with header path,label")->required();
  ingest->add_option("--out", dataset_out, "Dataset binary to write")->required();
  add_threads(ingest, threads);

  // synth
  SyntheticParams synth_params;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus with per-family signature tokens");
  synth->add_option("--families", synth_params.num_families, "Number of families");
  synth->add_option("--docs", synth_params.docs_per_family, "Documents per family");
  synth->add_option("--len", synth_params.doc_length, "Tokens per document");
  synth->add_option("--vocab", synth_params.vocab_size, "Alphabet size");
  synth->add_option("--seed", synth_params.seed, "Generator seed");
  synth->add_option("--out-dir", synth_dir, "Directory for traces and manifest.csv")->required();

  // featurize
  std::string feat_dataset, vocab_out, feat_out, feat_test_out;
  int feat_n = kDefaultGramOrder, feat_terms = kDefaultMaxTerms;
  double feat_fraction = 0.2;
  std::uint64_t feat_seed = 0;
  auto* featurize = app.add_subcommand("featurize", "Split, build the train vocabulary and write feature grids");
  featurize->add_option("--dataset", feat_dataset, "Dataset binary")->required();
  featurize->add_option("--n", feat_n, "Gram order (1..10)");
  featurize->add_option("--max-terms", feat_terms, "Vocabulary size cap");
  featurize->add_option("--test-fraction", feat_fraction, "Held-out fraction per family");
  featurize->add_option("--seed", feat_seed, "Root seed for the split");
  featurize->add_option("--vocab-out", vocab_out, "Vocabulary TSV to write")->required();
  featurize->add_option("--out", feat_out, "Train feature binary to write")->required();
  featurize->add_option("--test-out", feat_test_out, "Test feature binary (default: <out>.test)");
  add_threads(featurize, threads);

  // train
  nn::ModelConfig train_cfg;
  std::string train_features, train_out, train_log;
  std::uint64_t train_seed = 0;
  int train_run = 0;
  bool train_small = false, resume_capable = false;
  auto* train = app.add_subcommand("train", "Train one CNN-LSTM model on a feature binary");
  train->add_option("--features", train_features, "Train feature binary")->required();
  train->add_option("--seed", train_seed, "Root seed")->required();
  train->add_option("--run", train_run, "Run index whose substream seeds the model");
  train->add_option("--out", train_out, "Checkpoint to write")->required();
  train->add_option("--log", train_log, "CSV log epoch,loss,train_acc");
  train->add_flag("--small", train_small, "Desk-scale preset: 20 epochs, filters 4,8,8, hidden 16");
  train->add_flag("--resume-capable", resume_capable, "Store Adam moments in the checkpoint");
  add_model_flags(train, train_cfg);
  add_threads(train, threads);

  // eval
  std::string eval_model, eval_features, eval_report, eval_run_dir, eval_dataset;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a run directory");
  eval->add_option("--model", eval_model, "Checkpoint");
  eval->add_option("--features", eval_features, "Feature binary");
  eval->add_option("--dataset", eval_dataset, "Dataset binary providing label names");
  eval->add_option("--run-dir", eval_run_dir, "Run directory from the pipeline subcommand");
  eval->add_option("--report", eval_report, "Metrics JSON to write (default: stdout)");
  add_threads(eval, threads);

  // sweep-ngram
  RunConfig sweep_cfg;
  std::string sweep_dataset, sweep_out;
  std::vector<int> sweep_n;
  bool sweep_small = false;
  auto* sweep = app.add_subcommand("sweep-ngram", "Accuracy per gram order, aggregated over runs");
  sweep->add_option("--dataset", sweep_dataset, "Dataset binary")->required();
  sweep->add_option("--n-values", sweep_n, "Gram orders to test")->required()->delimiter(',');
  sweep->add_option("--runs", sweep_cfg.runs, "Runs per gram order");
  sweep->add_option("--seed", sweep_cfg.seed, "Root seed")->required();
  sweep->add_option("--max-terms", sweep_cfg.max_terms, "Vocabulary size cap");
  sweep->add_option("--test-fraction", sweep_cfg.test_fraction, "Held-out fraction per family");
  sweep->add_option("--out", sweep_out, "CSV to write (default: stdout)");
  sweep->add_flag("--small", sweep_small, "Desk-scale preset: 3 runs, 512 terms, small model");
  add_model_flags(sweep, sweep_cfg.model);
  add_threads(sweep, threads);

  // compare
  std::vector<std::string> compare_reports;
  bool compare_anova = false;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Summarize metrics reports and test their means");
  compare->add_option("--reports", compare_reports, "Metrics JSON files")->required();
  compare->add_flag("--anova", compare_anova, "Run one-way ANOVA across the reports");
  compare->add_option("--out", compare_out, "JSON to write (default: stdout)");

  // gradcheck
  std::uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every layer at float64");
  gradcheck->add_option("--seed", gc_seed, "Seed for the check inputs");

  // pipeline
  RunConfig pipe_cfg;
  std::string pipe_dir, pipe_config;
  bool pipe_small = false;
  auto* pipeline = app.add_subcommand("pipeline", "Ingest, featurize, train, evaluate into a run directory");
  pipeline->add_option("--manifest", pipe_cfg.manifest, "CSV manifest with header path,label");
  pipeline->add_option("--config", pipe_config, "Saved config.json to replay (other flags ignored)");
  pipeline->add_option("--run-dir", pipe_dir, "Output run directory")->required();
  pipeline->add_option("--n", pipe_cfg.n, "Gram order (1..10)");
  pipeline->add_option("--max-terms", pipe_cfg.max_terms, "Vocabulary size cap");
  pipeline->add_option("--test-fraction", pipe_cfg.test_fraction, "Held-out fraction per family");
  pipeline->add_option("--runs", pipe_cfg.runs, "Independent training runs");
  pipeline->add_option("--seed", pipe_cfg.seed, "Root seed");
  pipeline->add_flag("--small", pipe_small, "Desk-scale preset: 3 runs, 512 terms, small model");
  add_model_flags(pipeline, pipe_cfg.model);
  add_threads(pipeline, threads);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "ERROR:" << error_code_name(ErrorCode::UsageError) << ":" << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    const unsigned t = resolve_threads(threads);
    if (ingest->parsed()) {
      const Dataset ds = cmd_ingest(manifest_path, dataset_out, t);
      out << "ingested " << ds.docs.size() << " documents, " << ds.num_classes() << " families\n";
    } else if (synth->parsed()) {
      const auto docs = cmd_synth(synth_params, synth_dir);
      out << "wrote " << docs.size() << " documents to " << synth_dir << "\n";
    } else if (featurize->parsed()) {
      const std::string test_out = feat_test_out.empty() ? feat_out + ".test" : feat_test_out;
      const auto f = cmd_featurize(load_dataset(feat_dataset), feat_n, feat_terms, feat_fraction, feat_seed,
                                   {vocab_out, feat_out, test_out}, t);
      out << "vocabulary " << f.vocab.size() << " terms, grid " << f.train.height << "x" << f.train.width
          << ", train " << f.train.count() << ", test " << f.test.count() << "\n";
    } else if (train->parsed()) {
      nn::ModelConfig mc = resolve_model(*train, train_cfg, train_small);
      mc.seed = run_seed(train_seed, train_run);
      TrainOutputs to{train_out, std::nullopt, resume_capable};
      if (!train_log.empty()) to.log = train_log;
      const auto r = cmd_train(load_feature_set(train_features), mc, to, t);
      if (!r.log.empty())
        out << "final epoch " << r.log.back().epoch << " loss " << r.log.back().loss << " train_acc "
            << r.log.back().train_acc << "\n";
    } else if (eval->parsed()) {
      EvalReport report;
      if (!eval_run_dir.empty()) {
        report = cmd_eval_run_dir(eval_run_dir, t);
      } else {
        if (eval_model.empty() || eval_features.empty())
          throw Error(ErrorCode::UsageError, "eval needs --run-dir or both --model and --features");
        const FeatureSet data = load_feature_set(eval_features);
        auto labels = eval_dataset.empty() ? index_labels(data.num_classes) : load_dataset(eval_dataset).label_names;
        report = evaluate_model(nn::load_checkpoint(eval_model), data, std::move(labels), t);
      }
      emit(out, eval_report, dump_json(report_to_json(report)));
    } else if (sweep->parsed()) {
      resolve_run(*sweep, sweep_cfg, sweep_small);
      sweep_cfg.subcommand = "sweep-ngram";
      sweep_cfg.threads = t;
      emit(out, sweep_out, format_sweep_csv(cmd_sweep_ngram(load_dataset(sweep_dataset), sweep_n, sweep_cfg)));
    } else if (compare->parsed()) {
      std::vector<fs::path> paths(compare_reports.begin(), compare_reports.end());
      emit(out, compare_out, dump_json(cmd_compare(paths, compare_anova)));
    } else if (gradcheck->parsed()) {
      const auto report = cmd_gradcheck(gc_seed);
      out << report.format();
      if (!report.passed()) {
        err << "ERROR:" << error_code_name(ErrorCode::GradcheckFailed) << ":gradient check failed\n";
        return kExitError;
      }
    } else if (pipeline->parsed()) {
      RunConfig rc;
      if (!pipe_config.empty()) {
        rc = load_run_config(pipe_config);
      } else {
        if (pipe_cfg.manifest.empty()) throw Error(ErrorCode::UsageError, "pipeline needs --manifest or --config");
        rc = pipe_cfg;
        resolve_run(*pipeline, rc, pipe_small);
        rc.manifest = fs::absolute(rc.manifest).lexically_normal().string();
      }
      rc.threads = t;
      const auto r = cmd_pipeline(rc, pipe_dir);
      out << "accuracy " << r.report.metrics.accuracy << " (" << rc.runs << " runs, mean " << r.report.runs->mean
          << ")\n";
    }
  } catch (const Error& e) {
    err << "ERROR:" << e.code_name() << ":" << one_line(e.what()) << "\n";
    return e.code() == ErrorCode::UsageError ? kExitUsage : kExitError;
  } catch (const std::exception& e) {
    err << "ERROR:" << error_code_name(ErrorCode::IoError) << ":" << one_line(e.what()) << "\n";
    return kExitError;
  }
  return 0;
}

}  // namespace opsq::app
