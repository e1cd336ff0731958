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

#include "opsq/report.hpp"

#include "opsq/error.hpp"

namespace opsq {

EvalReport make_report(std::vector<std::string> labels, const ConfusionMatrix& cm) {
  EvalReport r;
  r.labels = std::move(labels);
  r.confusion = cm;
  r.metrics = metrics(cm);
  return r;
}

nlohmann::ordered_json anova_to_json(const AnovaResult& a) {
  nlohmann::ordered_json j;
  j["F"] = a.f;
  j["df1"] = a.df_between;
  j["df2"] = a.df_within;
  j["p"] = a.p;
  return j;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.metrics.accuracy;
  auto per_class = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.metrics.per_class.size(); ++k) {
    const auto& m = r.metrics.per_class[k];
    nlohmann::ordered_json c;
    c["label"] = k < r.labels.size() ? r.labels[k] : std::to_string(k);
    c["precision"] = m.precision;
    c["recall"] = m.recall;
    c["f1"] = m.f1;
    per_class.push_back(std::move(c));
  }
  j["per_class"] = std::move(per_class);
  nlohmann::ordered_json macro;
  macro["precision"] = r.metrics.macro.precision;
  macro["recall"] = r.metrics.macro.recall;
  macro["f1"] = r.metrics.macro.f1;
  j["macro"] = std::move(macro);
  j["confusion"] = r.confusion.counts();
  if (r.runs) {
    nlohmann::ordered_json runs;
    runs["mean"] = r.runs->mean;
    runs["max"] = r.runs->max;
    runs["min"] = r.runs->min;
    runs["values"] = r.runs->values;
    j["runs"] = std::move(runs);
  } else {
    j["runs"] = nullptr;
  }
  j["anova"] = r.anova ? anova_to_json(*r.anova) : nlohmann::ordered_json(nullptr);
  return j;
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::vector<double> run_values_from_report(const nlohmann::json& report) {
  try {
    if (report.contains("runs") && report["runs"].is_object())
      return report["runs"]["values"].get<std::vector<double>>();
    return {report.at("accuracy").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace opsq
