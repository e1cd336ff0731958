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

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "opsq/eval.hpp"

namespace opsq {

/// Everything the metrics JSON carries. Keys are emitted in a fixed order:
/// accuracy, per_class, macro, confusion, runs, anova.
struct EvalReport {
  std::vector<std::string> labels;
  ConfusionMatrix confusion;
  MetricsReport metrics;
  std::optional<RunSummary> runs;
  std::optional<AnovaResult> anova;
};

EvalReport make_report(std::vector<std::string> labels, const ConfusionMatrix& cm);

nlohmann::ordered_json report_to_json(const EvalReport& report);
nlohmann::ordered_json anova_to_json(const AnovaResult& anova);
std::string dump_json(const nlohmann::ordered_json& j);

/// Per-run accuracies of a saved report (`runs.values`, or `accuracy` when the
/// report covers a single run).
std::vector<double> run_values_from_report(const nlohmann::json& report);

}  // namespace opsq
