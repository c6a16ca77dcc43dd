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

// Hierarchical classification of one tool observation.
//
//   level 1  usage            (radial)
//   level 2  profile, tear    (radial, axial)
//   level 3  concave/convex severity, only on the branch picked by profile
//
// After level 2 the usage/profile/tear triple is checked against the conflict
// table. Every stage with a configured threshold raises a LowConfidence flag
// when its confidence falls below it. Flags are re-examination triggers; they
// never change the verdict.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flapwear/error.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear {

enum class ConflictPolicy : std::uint8_t {
  // Conflicts are reported; all stages, including level 3, are still decided.
  FlagOnly = 0,
  // Conflicts end the run after level 2; missing severity input is an error.
  RejectRun = 1,
};

inline std::string_view to_string(ConflictPolicy p) {
  return p == ConflictPolicy::FlagOnly ? "flag_only" : "reject_run";
}

inline std::optional<ConflictPolicy> parse_conflict_policy(std::string_view s) {
  if (s == "flag_only") return ConflictPolicy::FlagOnly;
  if (s == "reject_run") return ConflictPolicy::RejectRun;
  return std::nullopt;
}

inline constexpr double kDefaultUsageThreshold = 0.91;
inline constexpr double kDefaultTearThreshold = 0.79;

struct EngineConfig {
  std::map<StageId, double> thresholds = {{StageId::Usage, kDefaultUsageThreshold},
                                          {StageId::Tear, kDefaultTearThreshold}};
  ConflictPolicy conflict_policy = ConflictPolicy::FlagOnly;
  int ensemble_min_runs = 1;

  static EngineConfig without_thresholds() {
    EngineConfig c;
    c.thresholds.clear();
    return c;
  }

  std::optional<double> threshold(StageId s) const {
    auto it = thresholds.find(s);
    if (it == thresholds.end()) return std::nullopt;
    return it->second;
  }
};

inline void validate_config(const EngineConfig& c) {
  for (const auto& [stage, t] : c.thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::ConfigError,
                  "threshold for " + std::string(to_string(stage)) + " outside [0, 1]");
    }
  }
  if (c.ensemble_min_runs < 1) throw Error(ErrorCode::ConfigError, "ensemble_min_runs must be >= 1");
}

struct RunInput {
  std::string tool_id;
  ProbabilityVector usage{StageId::Usage, {}};
  ProbabilityVector profile{StageId::Profile, {}};
  ProbabilityVector tear{StageId::Tear, {}};
  std::optional<ProbabilityVector> concave_severity;
  std::optional<ProbabilityVector> convex_severity;
};

enum class FlagKind : std::uint8_t { LowConfidence = 0, Conflict = 1, MissingSeverityInput = 2 };

struct ReviewFlag {
  FlagKind kind = FlagKind::LowConfidence;
  // Meaningful for LowConfidence (the stage) and MissingSeverityInput (the
  // severity stage that was needed).
  StageId stage = StageId::Usage;
  // Meaningful for Conflict.
  ConflictKind conflict = ConflictKind::NewWithTear;

  static ReviewFlag low_confidence(StageId s) { return {FlagKind::LowConfidence, s, {}}; }
  static ReviewFlag conflict_of(ConflictKind k) { return {FlagKind::Conflict, StageId::Usage, k}; }
  static ReviewFlag missing_severity(StageId s) {
    return {FlagKind::MissingSeverityInput, s, {}};
  }

  friend bool operator==(const ReviewFlag&, const ReviewFlag&) = default;
  friend auto operator<=>(const ReviewFlag&, const ReviewFlag&) = default;
};

inline std::string describe(const ReviewFlag& f) {
  switch (f.kind) {
    case FlagKind::LowConfidence: return "low_confidence:" + std::string(to_string(f.stage));
    case FlagKind::Conflict: return "conflict:" + std::string(to_string(f.conflict));
    case FlagKind::MissingSeverityInput:
      return "missing_severity_input:" + std::string(to_string(f.stage));
  }
  return "?";
}

struct StageDecision {
  std::size_t class_index = 0;
  double confidence = 0.0;

  friend bool operator==(const StageDecision&, const StageDecision&) = default;
};

struct Conflicted {
  std::vector<ConflictKind> kinds;
  friend bool operator==(const Conflicted&, const Conflicted&) = default;
};

// Consistent path whose level-3 vector was not supplied (FlagOnly only).
struct Incomplete {
  friend bool operator==(const Incomplete&, const Incomplete&) = default;
};

using Verdict = std::variant<WearOutcome, Conflicted, Incomplete>;

struct RunResult {
  std::string tool_id;
  Verdict verdict = Incomplete{};
  std::map<StageId, StageDecision> stage_decisions;
  // Sorted, unique.
  std::vector<ReviewFlag> flags;

  const WearOutcome* outcome() const { return std::get_if<WearOutcome>(&verdict); }
  bool conflicted() const { return std::holds_alternative<Conflicted>(verdict); }

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

namespace detail {

inline StageDecision decide(const ProbabilityVector& v, StageId expected) {
  if (v.stage != expected) {
    throw Error(ErrorCode::StageMismatch, "expected a " + std::string(to_string(expected)) +
                                              " vector, got " + std::string(to_string(v.stage)));
  }
  require_valid(v);
  const std::size_t k = argmax_class(v);
  return {k, v.probs[k]};
}

}  // namespace detail

inline RunResult classify_run(const RunInput& input, const EngineConfig& config) {
  RunResult result;
  result.tool_id = input.tool_id;

  const StageDecision usage = detail::decide(input.usage, StageId::Usage);
  const StageDecision profile = detail::decide(input.profile, StageId::Profile);
  const StageDecision tear = detail::decide(input.tear, StageId::Tear);
  result.stage_decisions[StageId::Usage] = usage;
  result.stage_decisions[StageId::Profile] = profile;
  result.stage_decisions[StageId::Tear] = tear;

  const auto usage_state = static_cast<UsageState>(usage.class_index);
  const auto profile_state = static_cast<FlapProfile>(profile.class_index);
  const auto tear_state = static_cast<TearState>(tear.class_index);

  const std::vector<ConflictKind> conflicts =
      check_consistency(usage_state, profile_state, tear_state);
  for (ConflictKind k : conflicts) result.flags.push_back(ReviewFlag::conflict_of(k));

  const bool stop_after_level2 =
      !conflicts.empty() && config.conflict_policy == ConflictPolicy::RejectRun;

  std::optional<Severity> severity;
  bool missing_severity = false;
  if (needs_severity(profile_state) && !stop_after_level2) {
    const bool concave = profile_state == FlapProfile::Concave;
    const StageId sev_stage = concave ? StageId::ConcaveSeverity : StageId::ConvexSeverity;
    const auto& sev_vector = concave ? input.concave_severity : input.convex_severity;
    if (sev_vector) {
      const StageDecision sev = detail::decide(*sev_vector, sev_stage);
      result.stage_decisions[sev_stage] = sev;
      severity = static_cast<Severity>(sev.class_index);
    } else if (config.conflict_policy == ConflictPolicy::RejectRun) {
      throw Error(ErrorCode::MissingSeverityInput,
                  "tool '" + input.tool_id + "': profile " +
                      std::string(to_string(profile_state)) + " needs a " +
                      std::string(to_string(sev_stage)) + " vector");
    } else {
      missing_severity = true;
      result.flags.push_back(ReviewFlag::missing_severity(sev_stage));
    }
  }

  for (const auto& [stage, decision] : result.stage_decisions) {
    if (auto t = config.threshold(stage); t && decision.confidence < *t) {
      result.flags.push_back(ReviewFlag::low_confidence(stage));
    }
  }
  std::sort(result.flags.begin(), result.flags.end());

  if (!conflicts.empty()) {
    result.verdict = Conflicted{conflicts};
  } else if (missing_severity) {
    result.verdict = Incomplete{};
  } else {
    result.verdict = outcome_from_parts(usage_state, profile_state, tear_state, severity);
  }
  return result;
}

// Hook for triggering re-inspection: any flag at all.
inline bool needs_reevaluation(const RunResult& result) { return !result.flags.empty(); }

// ---------------------------------------------------------------------------
// Ensemble

// Vote bucket: outcome ids 1..11, all conflicted runs pool into one bucket,
// incomplete runs into another. Bucket order doubles as the final tie-break.
inline constexpr int kConflictedBucket = 12;
inline constexpr int kIncompleteBucket = 13;

inline int vote_bucket(const Verdict& v) {
  if (const auto* o = std::get_if<WearOutcome>(&v)) return o->id;
  if (std::holds_alternative<Conflicted>(v)) return kConflictedBucket;
  return kIncompleteBucket;
}

inline std::string bucket_name(int bucket) {
  if (bucket == kConflictedBucket) return "conflicted";
  if (bucket == kIncompleteBucket) return "incomplete";
  return std::to_string(bucket);
}

struct EnsembleResult {
  std::string tool_id;
  Verdict verdict = Incomplete{};
  std::map<int, int> vote_counts;
  std::map<StageId, double> mean_confidence_per_stage;
  int runs_used = 0;

  friend bool operator==(const EnsembleResult&, const EnsembleResult&) = default;
};

namespace detail {

// Sums in sorted order so the result is independent of run order.
inline double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

inline double mean_stage_confidence(const RunResult& r) {
  std::vector<double> c;
  for (const auto& [stage, d] : r.stage_decisions) c.push_back(d.confidence);
  return order_free_mean(std::move(c));
}

}  // namespace detail

// Decision-level fusion: majority vote over run verdicts. Ties go to the
// bucket whose runs have the higher mean stage confidence, then to the lower
// bucket number.
inline EnsembleResult ensemble_classify(std::span<const RunResult> runs,
                                        const EngineConfig& config) {
  if (runs.empty() || static_cast<int>(runs.size()) < config.ensemble_min_runs) {
    throw Error(ErrorCode::TooFewRuns, "ensemble needs at least " +
                                           std::to_string(config.ensemble_min_runs) +
                                           " runs, got " + std::to_string(runs.size()));
  }
  EnsembleResult out;
  out.tool_id = runs.front().tool_id;
  out.runs_used = static_cast<int>(runs.size());

  std::map<int, std::vector<double>> bucket_confidences;
  std::map<StageId, std::vector<double>> stage_confidences;
  std::set<ConflictKind> all_conflicts;
  for (const auto& r : runs) {
    if (r.tool_id != out.tool_id) {
      throw Error(ErrorCode::MixedTools,
                  "ensemble mixes tools '" + out.tool_id + "' and '" + r.tool_id + "'");
    }
    const int bucket = vote_bucket(r.verdict);
    ++out.vote_counts[bucket];
    bucket_confidences[bucket].push_back(detail::mean_stage_confidence(r));
    for (const auto& [stage, d] : r.stage_decisions) stage_confidences[stage].push_back(d.confidence);
    if (const auto* c = std::get_if<Conflicted>(&r.verdict)) {
      all_conflicts.insert(c->kinds.begin(), c->kinds.end());
    }
  }
  for (auto& [stage, values] : stage_confidences) {
    out.mean_confidence_per_stage[stage] = detail::order_free_mean(std::move(values));
  }

  int winner = 0;
  int best_votes = -1;
  double best_conf = -1.0;
  for (const auto& [bucket, votes] : out.vote_counts) {
    const double conf = detail::order_free_mean(bucket_confidences[bucket]);
    // Buckets are visited in ascending order, so strict comparisons keep the
    // lower bucket on exact ties.
    if (votes > best_votes || (votes == best_votes && conf > best_conf)) {
      winner = bucket;
      best_votes = votes;
      best_conf = conf;
    }
  }

  if (winner == kConflictedBucket) {
    out.verdict = Conflicted{{all_conflicts.begin(), all_conflicts.end()}};
  } else if (winner == kIncompleteBucket) {
    out.verdict = Incomplete{};
  } else {
    out.verdict = outcome_by_id(winner);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grouping prediction records into runs

// Groups records per tool (in order of first appearance) and then per run.
// Records carrying a `run` key are grouped by it; records without one pair up
// positionally, i.e. the k-th record of each stage belongs to run k. A tool
// must use one scheme or the other.
inline std::vector<RunInput> assemble_runs(std::span<const LabeledSample> samples) {
  std::vector<std::string> tool_order;
  std::map<std::string, std::vector<const Prediction*>> by_tool;
  for (const auto& s : samples) {
    const auto& p = s.prediction;
    auto [it, inserted] = by_tool.try_emplace(p.tool_id);
    if (inserted) tool_order.push_back(p.tool_id);
    it->second.push_back(&p);
  }

  std::vector<RunInput> runs;
  for (const auto& tool : tool_order) {
    const auto& records = by_tool[tool];
    const bool keyed = records.front()->run.has_value();
    std::map<std::int64_t, std::map<StageId, std::vector<const Prediction*>>> grouped;
    std::map<StageId, std::int64_t> positional;
    for (const Prediction* p : records) {
      if (p->run.has_value() != keyed) {
        throw Error(ErrorCode::ValidationError,
                    "tool '" + tool + "' mixes records with and without a run key");
      }
      const std::int64_t key = keyed ? *p->run : positional[p->vector.stage]++;
      grouped[key][p->vector.stage].push_back(p);
    }
    for (const auto& [key, stages] : grouped) {
      const std::string where = "tool '" + tool + "' run " + std::to_string(key);
      for (const auto& [stage, list] : stages) {
        if (list.size() > 1) {
          throw Error(ErrorCode::ValidationError,
                      where + " has " + std::to_string(list.size()) + " " +
                          std::string(to_string(stage)) + " records");
        }
      }
      RunInput in;
      in.tool_id = tool;
      for (StageId required : {StageId::Usage, StageId::Profile, StageId::Tear}) {
        if (!stages.count(required)) {
          throw Error(ErrorCode::ValidationError,
                      where + " lacks a " + std::string(to_string(required)) + " record");
        }
      }
      in.usage = stages.at(StageId::Usage).front()->vector;
      in.profile = stages.at(StageId::Profile).front()->vector;
      in.tear = stages.at(StageId::Tear).front()->vector;
      if (auto it = stages.find(StageId::ConcaveSeverity); it != stages.end()) {
        in.concave_severity = it->second.front()->vector;
      }
      if (auto it = stages.find(StageId::ConvexSeverity); it != stages.end()) {
        in.convex_severity = it->second.front()->vector;
      }
      runs.push_back(std::move(in));
    }
  }
  return runs;
}

}  // namespace flapwear
