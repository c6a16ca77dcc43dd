/*
 * Copyright 2026 The flapwear Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Evaluation metrics: confusion matrices, per-class precision/recall/F1,
// accuracy, macro-F1, confidence statistics and ROC/AUC.
//
// Zero denominators yield std::nullopt rather than an exception, so a report
// can always be produced ("n/a").

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flapwear/error.hpp"
#include "flapwear/predictions.hpp"

namespace flapwear {

// Rows are true classes, columns predicted classes. Forms a monoid under
// merge() with the zero matrix as identity.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(StageId stage)
      : stage_(stage), n_(class_count(stage)), counts_(n_ * n_, 0) {}

  ConfusionMatrix(StageId stage, const std::vector<std::vector<std::uint64_t>>& rows)
      : ConfusionMatrix(stage) {
    if (rows.size() != n_) {
      throw Error(ErrorCode::BadLength, "confusion matrix for " + std::string(to_string(stage)) +
                                            " needs " + std::to_string(n_) + " rows");
    }
    for (std::size_t t = 0; t < n_; ++t) {
      if (rows[t].size() != n_) {
        throw Error(ErrorCode::BadLength, "confusion matrix row " + std::to_string(t) +
                                              " needs " + std::to_string(n_) + " entries");
      }
      for (std::size_t p = 0; p < n_; ++p) at(t, p) = rows[t][p];
    }
  }

  StageId stage() const { return stage_; }
  std::size_t size() const { return n_; }

  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * n_ + predicted];
  }

  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1) {
    if (truth >= n_ || predicted >= n_) {
      throw Error(ErrorCode::IndexOutOfRange, "class index out of range for " +
                                                  std::string(to_string(stage_)) + " matrix");
    }
    at(truth, predicted) += count;
  }

  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += (*this)(t, p);
    return s;
  }

  std::uint64_t column_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < n_; ++t) s += (*this)(t, p);
    return s;
  }

  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < n_; ++i) s += (*this)(i, i);
    return s;
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  std::vector<std::vector<std::uint64_t>> rows() const {
    std::vector<std::vector<std::uint64_t>> out(n_, std::vector<std::uint64_t>(n_));
    for (std::size_t t = 0; t < n_; ++t)
      for (std::size_t p = 0; p < n_; ++p) out[t][p] = (*this)(t, p);
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::uint64_t& at(std::size_t t, std::size_t p) { return counts_[t * n_ + p]; }

  StageId stage_;
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix accumulate(ConfusionMatrix cm, std::size_t truth, std::size_t predicted) {
  cm.add(truth, predicted);
  return cm;
}

inline ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.stage() != b.stage()) {
    throw Error(ErrorCode::StageMismatch, "cannot merge " + std::string(to_string(a.stage())) +
                                              " and " + std::string(to_string(b.stage())) +
                                              " matrices");
  }
  ConfusionMatrix out = a;
  for (std::size_t t = 0; t < b.size(); ++t)
    for (std::size_t p = 0; p < b.size(); ++p)
      if (b(t, p)) out.add(t, p, b(t, p));
  return out;
}

// Builds a matrix from labeled samples using argmax decisions. Samples without
// truth or of another stage are ignored.
inline ConfusionMatrix confusion_from_samples(StageId stage, std::span<const LabeledSample> samples) {
  ConfusionMatrix cm(stage);
  for (const auto& s : samples) {
    if (s.prediction.vector.stage != stage || !s.truth) continue;
    cm.add(*s.truth, argmax_class(s.prediction.vector));
  }
  return cm;
}

struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

inline std::optional<double> safe_ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.size()) throw Error(ErrorCode::IndexOutOfRange, "class index out of range");
  ClassMetrics m;
  m.precision = safe_ratio(cm(c, c), cm.column_sum(c));
  m.recall = safe_ratio(cm(c, c), cm.row_sum(c));
  if (m.precision && m.recall) {
    const double p = *m.precision;
    const double r = *m.recall;
    m.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return m;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "accuracy of an empty matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

// Unweighted mean of per-class F1 from unrounded precision and recall.
inline double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto m = class_metrics(cm, c);
    if (!m.f1) {
      throw Error(ErrorCode::UndefinedClassMetric,
                  "F1 undefined for class " + std::string(class_name(cm.stage(), c)));
    }
    sum += *m.f1;
  }
  return sum / static_cast<double>(cm.size());
}

// ---------------------------------------------------------------------------
// ROC

struct ScoredSample {
  double score = 0.0;  // positive-class probability
  bool positive = false;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  // Score threshold at which this point is reached (>= threshold counts as
  // positive). The origin uses +infinity.
  double threshold = 0.0;
};

struct RocCurve {
  StageId stage = StageId::Usage;
  std::size_t positive_class = 0;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Threshold sweep over descending unique scores; tied scores form one step,
// which contributes a diagonal segment. AUC is the trapezoidal area, computed
// on integer counts so it equals the pairwise (Mann-Whitney) estimate.
inline RocCurve roc_curve(std::vector<ScoredSample> samples, StageId stage = StageId::Usage,
                          std::size_t positive_class = 0) {
  std::uint64_t n_pos = 0, n_neg = 0;
  for (const auto& s : samples) (s.positive ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::DegenerateInput, "ROC needs both positive and negative samples");
  }
  std::sort(samples.begin(), samples.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

  RocCurve curve;
  curve.stage = stage;
  curve.positive_class = positive_class;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});

  std::uint64_t tp = 0, fp = 0;
  // Twice the area in units of one positive-negative pair.
  std::uint64_t doubled_area = 0;
  std::size_t i = 0;
  while (i < samples.size()) {
    const double threshold = samples[i].score;
    const std::uint64_t tp_before = tp, fp_before = fp;
    while (i < samples.size() && samples[i].score == threshold) {
      (samples[i].positive ? tp : fp)++;
      ++i;
    }
    doubled_area += (fp - fp_before) * (tp + tp_before);
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos), threshold});
  }
  curve.auc = static_cast<double>(doubled_area) /
              (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

// One-vs-rest ROC for `positive_class` on the samples of `stage`.
inline RocCurve roc_for_class(StageId stage, std::size_t positive_class,
                              std::span<const LabeledSample> samples) {
  std::vector<ScoredSample> scored;
  for (const auto& s : samples) {
    if (s.prediction.vector.stage != stage || !s.truth) continue;
    scored.push_back({s.prediction.vector.probs.at(positive_class), *s.truth == positive_class});
  }
  return roc_curve(std::move(scored), stage, positive_class);
}

// ---------------------------------------------------------------------------
// Confidence statistics

struct ConfidenceStats {
  double mean_all = 0.0;
  std::optional<double> mean_false;
  std::size_t count_all = 0;
  std::size_t count_false = 0;
};

struct ConfidenceObservation {
  double confidence = 0.0;
  bool correct = true;
};

inline ConfidenceStats confidence_stats(std::span<const ConfidenceObservation> obs) {
  if (obs.empty()) throw Error(ErrorCode::EmptyInput, "confidence statistics of no samples");
  ConfidenceStats st;
  double sum_all = 0.0, sum_false = 0.0;
  for (const auto& o : obs) {
    sum_all += o.confidence;
    ++st.count_all;
    if (!o.correct) {
      sum_false += o.confidence;
      ++st.count_false;
    }
  }
  st.mean_all = sum_all / static_cast<double>(st.count_all);
  if (st.count_false) st.mean_false = sum_false / static_cast<double>(st.count_false);
  return st;
}

inline ConfidenceStats confidence_stats(StageId stage, std::span<const LabeledSample> samples) {
  std::vector<ConfidenceObservation> obs;
  for (const auto& s : samples) {
    if (s.prediction.vector.stage != stage || !s.truth) continue;
    obs.push_back({confidence(s.prediction.vector), argmax_class(s.prediction.vector) == *s.truth});
  }
  return confidence_stats(obs);
}

}  // namespace flapwear
