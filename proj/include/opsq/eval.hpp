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
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opsq {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return classes_; }
  std::int64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  const std::vector<std::int64_t>& counts() const noexcept { return counts_; }

  std::int64_t total() const;
  std::int64_t true_positives(std::size_t k) const { return at(k, k); }
  std::int64_t false_positives(std::size_t k) const;  // column sum - TP
  std::int64_t false_negatives(std::size_t k) const;  // row sum - TP
  std::int64_t true_negatives(std::size_t k) const;

 private:
  std::size_t classes_ = 0;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> truths,
                          std::size_t classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted mean over classes
};

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Accuracy, precision, recall and F1 from the four counts. A zero
/// denominator yields 0 for that metric.
BinaryMetrics binary_metrics(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn);

/// Per-class one-vs-rest metrics plus macro averages; accuracy is
/// trace / total.
MetricsReport metrics(const ConfusionMatrix& cm);

struct RunSummary {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::vector<double> values;
};

RunSummary aggregate_runs(std::span<const double> accuracies);

struct AnovaResult {
  double f = 0.0;
  int df_between = 0;
  int df_within = 0;
  double p = 1.0;
};

/// One-way ANOVA: F = MS_between / MS_within, p = P(F' >= F) for
/// F' ~ F(k-1, N-k).
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

/// CDF and upper tail of the F distribution with (d1, d2) degrees of freedom.
double f_cdf(double x, int d1, int d2);
double f_survival(double x, int d1, int d2);

}  // namespace opsq
