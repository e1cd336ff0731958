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

#include "opsq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "opsq/error.hpp"

namespace opsq {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::false_positives(std::size_t k) const {
  std::int64_t col = 0;
  for (std::size_t t = 0; t < classes_; ++t) col += at(t, k);
  return col - at(k, k);
}

std::int64_t ConfusionMatrix::false_negatives(std::size_t k) const {
  std::int64_t row = 0;
  for (std::size_t p = 0; p < classes_; ++p) row += at(k, p);
  return row - at(k, k);
}

std::int64_t ConfusionMatrix::true_negatives(std::size_t k) const {
  return total() - true_positives(k) - false_positives(k) - false_negatives(k);
}

ConfusionMatrix confusion(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> truths,
                          std::size_t classes) {
  if (preds.size() != truths.size())
    throw Error(ErrorCode::LengthMismatch, "predictions and truths differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || truths[i] >= classes)
      throw Error(ErrorCode::LabelOutOfRange, "label outside [0, " + std::to_string(classes) + ")");
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

BinaryMetrics binary_metrics(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn) {
  BinaryMetrics m;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no samples");
  MetricsReport r;
  std::int64_t diag = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    diag += cm.true_positives(k);
    auto b = binary_metrics(cm.true_positives(k), cm.true_negatives(k), cm.false_positives(k), cm.false_negatives(k));
    r.per_class.push_back({b.precision, b.recall, b.f1});
    r.macro.precision += b.precision;
    r.macro.recall += b.recall;
    r.macro.f1 += b.f1;
  }
  const auto k = static_cast<double>(cm.classes());
  r.macro.precision /= k;
  r.macro.recall /= k;
  r.macro.f1 /= k;
  r.accuracy = ratio(diag, total);
  return r;
}

RunSummary aggregate_runs(std::span<const double> accuracies) {
  if (accuracies.empty()) throw Error(ErrorCode::EmptyList, "no run accuracies to aggregate");
  RunSummary s;
  s.values.assign(accuracies.begin(), accuracies.end());
  long double sum = 0.0L;
  for (double a : accuracies) sum += a;
  s.mean = static_cast<double>(sum / static_cast<long double>(accuracies.size()));
  auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error(ErrorCode::TooFewGroups, "ANOVA needs at least two groups");
  std::size_t total = 0;
  long double grand_sum = 0.0L;
  std::vector<double> means;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error(ErrorCode::TooFewObservations, "every ANOVA group needs two observations");
    long double s = 0.0L;
    for (double v : g) s += v;
    grand_sum += s;
    total += g.size();
    means.push_back(static_cast<double>(s / static_cast<long double>(g.size())));
  }
  const double grand = static_cast<double>(grand_sum / static_cast<long double>(total));

  long double ss_between = 0.0L, ss_within = 0.0L;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const long double d = means[i] - grand;
    ss_between += static_cast<long double>(groups[i].size()) * d * d;
    for (double v : groups[i]) {
      const long double e = v - means[i];
      ss_within += e * e;
    }
  }
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(total - groups.size());
  // Relative test: a spread this small next to the data scale is rounding noise.
  long double scale = 0.0L;
  for (const auto& g : groups)
    for (double v : g) scale = std::max<long double>(scale, std::abs(v - grand));
  if (ss_within <= 0.0L || ss_within <= 1e-24L * scale * scale * static_cast<long double>(total))
    throw Error(ErrorCode::DegenerateGroups, "within-group variance is zero");
  const double ms_between = static_cast<double>(ss_between / r.df_between);
  const double ms_within = static_cast<double>(ss_within / r.df_within);
  r.f = ms_between / ms_within;
  r.p = f_survival(r.f, r.df_between, r.df_within);
  return r;
}

namespace {

constexpr int kBetaMaxIterations = 200;
constexpr double kBetaConvergence = 1e-14;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kBetaConvergence) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidParams, "beta shape parameters must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidParams, "incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

namespace {

void check_degrees(double x, int d1, int d2) {
  if (d1 < 1 || d2 < 1) throw Error(ErrorCode::InvalidDegrees, "F distribution degrees must be >= 1");
  if (!(x >= 0.0)) throw Error(ErrorCode::InvalidParams, "F statistic must be >= 0");
}

}  // namespace

double f_cdf(double x, int d1, int d2) {
  check_degrees(x, d1, d2);
  if (std::isinf(x)) return 1.0;
  const double z = d1 * x / (d1 * x + d2);
  return regularized_incomplete_beta(z, d1 / 2.0, d2 / 2.0);
}

double f_survival(double x, int d1, int d2) {
  check_degrees(x, d1, d2);
  if (std::isinf(x)) return 0.0;
  // 1 - I_z(d1/2, d2/2) = I_{1-z}(d2/2, d1/2), evaluated without cancellation.
  const double w = d2 / (d1 * x + d2);
  return regularized_incomplete_beta(w, d2 / 2.0, d1 / 2.0);
}

}  // namespace opsq
