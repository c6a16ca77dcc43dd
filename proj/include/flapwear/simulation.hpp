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

// End-to-end simulations: synthetic wheels through the feature classifiers
// and the engine (closed loop), and stochastic-oracle predictions calibrated
// to confusion matrices through the engine.

#pragma once

#include <array>
#include <cstdint>
#include <future>
#include <map>
#include <span>
#include <vector>

#include "flapwear/engine.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/propagation.hpp"
#include "flapwear/random.hpp"
#include "flapwear/synth.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear::sim {

// Per-stage tally of stage decisions against ground truth.
struct StageTally {
  std::uint64_t decided = 0;
  std::uint64_t correct = 0;

  double accuracy() const {
    return decided ? static_cast<double>(correct) / static_cast<double>(decided) : 0.0;
  }
};

struct HierarchyTally {
  std::uint64_t runs = 0;
  std::uint64_t correct = 0;
  std::uint64_t conflicted = 0;

  double accuracy() const {
    return runs ? static_cast<double>(correct) / static_cast<double>(runs) : 0.0;
  }
};

inline void add(HierarchyTally& into, const HierarchyTally& from) {
  into.runs += from.runs;
  into.correct += from.correct;
  into.conflicted += from.conflicted;
}

inline std::size_t branch_index(FlapProfile p) { return static_cast<std::size_t>(p); }

struct SimulationReport {
  HierarchyTally overall;
  std::array<HierarchyTally, 3> per_branch{};
  std::map<StageId, StageTally> stages;
  CorrectionLedger ledger;
  // Run-level usage-threshold statistics.
  std::uint64_t errors_flagged_usage = 0;
  std::uint64_t correct_flagged_usage = 0;
};

inline void merge_into(SimulationReport& into, const SimulationReport& from) {
  add(into.overall, from.overall);
  for (std::size_t b = 0; b < 3; ++b) add(into.per_branch[b], from.per_branch[b]);
  for (const auto& [stage, t] : from.stages) {
    into.stages[stage].decided += t.decided;
    into.stages[stage].correct += t.correct;
  }
  flapwear::merge_into(into.ledger, from.ledger);
  into.errors_flagged_usage += from.errors_flagged_usage;
  into.correct_flagged_usage += from.correct_flagged_usage;
}

namespace detail {

inline std::size_t severity_truth_or(const WearOutcome& o, FlapProfile branch, Rng& rng) {
  if (o.profile == branch && o.severity) return static_cast<std::size_t>(*o.severity);
  return static_cast<std::size_t>(rng() & 1u);
}

inline void score_run(SimulationReport& rep, const RunResult& result, const WearOutcome& truth,
                      const std::map<StageId, std::size_t>& stage_truth) {
  const WearOutcome* o = result.outcome();
  const bool correct = o && o->id == truth.id;
  HierarchyTally& branch = rep.per_branch[branch_index(truth.profile)];
  for (HierarchyTally* t : {&rep.overall, &branch}) {
    ++t->runs;
    if (correct) ++t->correct;
    if (result.conflicted()) ++t->conflicted;
  }
  for (const auto& [stage, decision] : result.stage_decisions) {
    auto it = stage_truth.find(stage);
    if (it == stage_truth.end()) continue;
    ++rep.stages[stage].decided;
    if (decision.class_index == it->second) ++rep.stages[stage].correct;
  }
  const bool usage_flag = std::find(result.flags.begin(), result.flags.end(),
                                    ReviewFlag::low_confidence(StageId::Usage)) != result.flags.end();
  if (usage_flag) ++(correct ? rep.correct_flagged_usage : rep.errors_flagged_usage);
  record_run(rep.ledger, result, truth);
}

inline std::map<StageId, std::size_t> true_classes(const WearOutcome& o) {
  std::map<StageId, std::size_t> t;
  t[StageId::Usage] = static_cast<std::size_t>(o.usage);
  t[StageId::Profile] = static_cast<std::size_t>(o.profile);
  t[StageId::Tear] = static_cast<std::size_t>(o.tear);
  if (o.profile == FlapProfile::Concave) t[StageId::ConcaveSeverity] = static_cast<std::size_t>(*o.severity);
  if (o.profile == FlapProfile::Convex) t[StageId::ConvexSeverity] = static_cast<std::size_t>(*o.severity);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Closed loop over synthetic wheels

inline SimulationReport simulate_synthetic(std::span<const synth::WheelSpec> specs,
                                           std::uint64_t seeds_per_spec, std::uint64_t seed,
                                           const EngineConfig& engine,
                                           const synth::GeneratorConfig& gen = {}) {
  if (specs.empty() || seeds_per_spec == 0) {
    throw Error(ErrorCode::InvalidArgument, "synthetic simulation needs specs and >= 1 seed");
  }
  SimulationReport rep;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const WearOutcome truth = specs[i].outcome();
    const auto stage_truth = detail::true_classes(truth);
    for (std::uint64_t k = 0; k < seeds_per_spec; ++k) {
      const auto obs = synth::generate_observation(
          specs[i], derive_seed(seed, i * seeds_per_spec + k), gen);
      const RunResult result =
          classify_run(synth::classify_observation(obs, "synth-" + std::to_string(i)), engine);
      detail::score_run(rep, result, truth, stage_truth);
    }
  }
  return rep;
}

// `n` random zero-noise (or noisy) specs covering the 11 outcomes round-robin.
inline std::vector<synth::WheelSpec> random_specs(std::size_t n, std::uint64_t seed,
                                                  double noise_sigma = 0.0) {
  Rng rng(derive_seed(seed, 0x5bec));
  const auto outcomes = enumerate_consistent_outcomes();
  std::vector<synth::WheelSpec> specs;
  specs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    specs.push_back(synth::random_spec(outcomes[i % outcomes.size()], rng, noise_sigma));
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Oracle-driven hierarchy

enum class RowCalibration {
  // Every truth class hits with the matrix accuracy (path-product model).
  Accuracy,
  // Each truth class uses its own confusion row.
  PerClass,
};

struct OracleConfig {
  std::map<StageId, ConfusionMatrix> matrices;
  synth::ConfidenceLaw law;
  RowCalibration calibration = RowCalibration::Accuracy;
  BranchMix mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

// Confusion matrices of the five stage models on their test sets.
inline std::map<StageId, ConfusionMatrix> reference_matrices() {
  std::map<StageId, ConfusionMatrix> m;
  m.emplace(StageId::Usage, ConfusionMatrix(StageId::Usage, {{458, 2}, {19, 1021}}));
  m.emplace(StageId::Profile,
            ConfusionMatrix(StageId::Profile, {{1165, 0, 0}, {40, 1212, 107}, {15, 1, 1024}}));
  m.emplace(StageId::ConcaveSeverity, ConfusionMatrix(StageId::ConcaveSeverity, {{157, 3}, {0, 280}}));
  m.emplace(StageId::Tear, ConfusionMatrix(StageId::Tear, {{419, 61}, {11, 662}}));
  m.emplace(StageId::ConvexSeverity, ConfusionMatrix(StageId::ConvexSeverity, {{141, 19}, {0, 220}}));
  return m;
}

inline StageAccuracies accuracies_of(const std::map<StageId, ConfusionMatrix>& m) {
  return {accuracy(m.at(StageId::Usage)), accuracy(m.at(StageId::Tear)),
          accuracy(m.at(StageId::Profile)), accuracy(m.at(StageId::ConcaveSeverity)),
          accuracy(m.at(StageId::ConvexSeverity))};
}

namespace detail {

struct OracleRows {
  // rows[stage][truth]
  std::map<StageId, std::vector<std::vector<double>>> rows;
};

inline OracleRows build_rows(const OracleConfig& cfg) {
  OracleRows out;
  for (StageId s : kAllStages) {
    auto it = cfg.matrices.find(s);
    if (it == cfg.matrices.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  "oracle config lacks a matrix for " + std::string(to_string(s)));
    }
    synth::validate_law(s, cfg.law);
    auto& rows = out.rows[s];
    for (std::size_t t = 0; t < class_count(s); ++t) {
      rows.push_back(cfg.calibration == RowCalibration::Accuracy
                         ? synth::accuracy_calibrated_row(it->second, t)
                         : synth::per_class_row(it->second, t));
      synth::validate_row(s, rows.back());
    }
  }
  return out;
}

// Outcomes on each profile branch: 1-3, 4-7, 8-11.
inline std::array<std::vector<WearOutcome>, 3> outcomes_by_branch() {
  std::array<std::vector<WearOutcome>, 3> b;
  for (const auto& o : enumerate_consistent_outcomes()) b[branch_index(o.profile)].push_back(o);
  return b;
}

}  // namespace detail

struct OracleDraw {
  WearOutcome truth;
  RunInput input;
  // True class behind each stage vector (severity stages off the true branch
  // get a random class).
  std::map<StageId, std::size_t> stage_truth;
};

inline OracleDraw draw_oracle_run(const detail::OracleRows& rows, const synth::ConfidenceLaw& law,
                                  const BranchMix& mix, Rng& rng, std::string tool_id) {
  static const auto by_branch = detail::outcomes_by_branch();
  const double u = unit_uniform(rng);
  const std::size_t b = u < mix[0] ? 0 : (u < mix[0] + mix[1] ? 1 : 2);
  const auto& candidates = by_branch[b];
  OracleDraw d;
  d.truth = candidates[rng() % candidates.size()];
  d.stage_truth = detail::true_classes(d.truth);
  const std::size_t concave_truth = detail::severity_truth_or(d.truth, FlapProfile::Concave, rng);
  const std::size_t convex_truth = detail::severity_truth_or(d.truth, FlapProfile::Convex, rng);

  auto draw = [&](StageId s, std::size_t truth) {
    return synth::oracle_prediction(s, truth, rows.rows.at(s)[truth], law, rng).vector;
  };
  d.input.tool_id = std::move(tool_id);
  d.input.usage = draw(StageId::Usage, d.stage_truth[StageId::Usage]);
  d.input.profile = draw(StageId::Profile, d.stage_truth[StageId::Profile]);
  d.input.tear = draw(StageId::Tear, d.stage_truth[StageId::Tear]);
  d.input.concave_severity = draw(StageId::ConcaveSeverity, concave_truth);
  d.input.convex_severity = draw(StageId::ConvexSeverity, convex_truth);
  return d;
}

inline constexpr std::uint64_t kOracleShard = 1u << 14;

// `n` runs, branch drawn from the mix, true outcome uniform within the branch.
// Sharded with derived seeds; the result depends only on (inputs, seed).
inline SimulationReport simulate_oracle(const OracleConfig& cfg, std::uint64_t n,
                                        std::uint64_t seed, const EngineConfig& engine) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  validate_mix(cfg.mix);
  const detail::OracleRows rows = detail::build_rows(cfg);

  auto run_shard = [&](std::uint64_t shard, std::uint64_t count) {
    SimulationReport rep;
    Rng rng(derive_seed(seed, shard));
    for (std::uint64_t t = 0; t < count; ++t) {
      const OracleDraw d = draw_oracle_run(rows, cfg.law, cfg.mix, rng, "oracle");
      detail::score_run(rep, classify_run(d.input, engine), d.truth, d.stage_truth);
    }
    return rep;
  };

  const std::uint64_t shards = (n + kOracleShard - 1) / kOracleShard;
  std::vector<std::future<SimulationReport>> futures;
  for (std::uint64_t s = 0; s < shards; ++s) {
    futures.push_back(
        std::async(std::launch::async, run_shard, s, std::min(kOracleShard, n - s * kOracleShard)));
  }
  SimulationReport out;
  for (auto& f : futures) merge_into(out, f.get());
  return out;
}

// Labeled prediction records for `n` oracle runs (one radial and one axial
// image each), usable as an evaluate/classify input.
inline std::vector<LabeledSample> export_oracle_samples(const OracleConfig& cfg, std::uint64_t n,
                                                        std::uint64_t seed) {
  validate_mix(cfg.mix);
  const detail::OracleRows rows = detail::build_rows(cfg);
  Rng rng(derive_seed(seed, 0xe5));
  std::vector<LabeledSample> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string tool = "oracle-" + std::to_string(i);
    const OracleDraw d = draw_oracle_run(rows, cfg.law, cfg.mix, rng, tool);
    auto push = [&](const ProbabilityVector& v, std::optional<std::size_t> truth) {
      LabeledSample s;
      s.prediction.tool_id = tool;
      s.prediction.view = required_view(v.stage);
      s.prediction.image_id = tool + (s.prediction.view == View::Radial ? "-radial" : "-axial");
      s.prediction.vector = v;
      s.truth = truth;
      out.push_back(std::move(s));
    };
    auto truth_of = [&](StageId s) -> std::optional<std::size_t> {
      auto it = d.stage_truth.find(s);
      if (it == d.stage_truth.end()) return std::nullopt;
      return it->second;
    };
    push(d.input.usage, truth_of(StageId::Usage));
    push(d.input.profile, truth_of(StageId::Profile));
    push(d.input.tear, truth_of(StageId::Tear));
    push(*d.input.concave_severity, truth_of(StageId::ConcaveSeverity));
    push(*d.input.convex_severity, truth_of(StageId::ConvexSeverity));
  }
  return out;
}

// Same export for synthetic wheels.
inline std::vector<LabeledSample> export_synthetic_samples(std::span<const synth::WheelSpec> specs,
                                                           std::uint64_t seed,
                                                           const synth::GeneratorConfig& gen = {}) {
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string tool = "synth-" + std::to_string(i);
    const auto obs = synth::generate_observation(specs[i], derive_seed(seed, i), gen);
    const RunInput in = synth::classify_observation(obs, tool);
    const auto truth = detail::true_classes(specs[i].outcome());
    for (const ProbabilityVector* v : {&in.usage, &in.profile, &in.tear, &*in.concave_severity,
                                       &*in.convex_severity}) {
      LabeledSample s;
      s.prediction.tool_id = tool;
      s.prediction.view = required_view(v->stage);
      s.prediction.image_id = tool + (s.prediction.view == View::Radial ? "-radial" : "-axial");
      s.prediction.vector = *v;
      if (auto it = truth.find(v->stage); it != truth.end()) s.truth = it->second;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace flapwear::sim
