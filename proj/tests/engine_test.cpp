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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "flapwear/engine.hpp"
#include "test_util.hpp"

namespace flapwear {
namespace {

using testing::run_input;

const WearOutcome& outcome_of(const RunResult& r) {
  const WearOutcome* o = r.outcome();
  if (!o) throw std::logic_error("verdict is not an outcome");
  return *o;
}

bool has_flag(const RunResult& r, const ReviewFlag& f) {
  return std::find(r.flags.begin(), r.flags.end(), f) != r.flags.end();
}

TEST(ClassifyRun, UsedConcavePartially) {
  const auto r = classify_run(run_input({0.02, 0.98}, {0.1, 0.85, 0.05}, {0.2, 0.8}, {0.3, 0.7}),
                              EngineConfig{});
  EXPECT_EQ(outcome_of(r).id, 4);
  EXPECT_TRUE(r.flags.empty());
  EXPECT_FALSE(needs_reevaluation(r));
  EXPECT_EQ(r.stage_decisions.count(StageId::ConcaveSeverity), 1u);
  EXPECT_EQ(r.stage_decisions.count(StageId::ConvexSeverity), 0u);
}

TEST(ClassifyRun, NewWithTearConflict) {
  const auto r = classify_run(run_input({0.95, 0.05}, {0.9, 0.05, 0.05}, {0.97, 0.03}), EngineConfig{});
  ASSERT_TRUE(r.conflicted());
  EXPECT_EQ(std::get<Conflicted>(r.verdict).kinds, std::vector<ConflictKind>{ConflictKind::NewWithTear});
  EXPECT_TRUE(has_flag(r, ReviewFlag::conflict_of(ConflictKind::NewWithTear)));
  EXPECT_TRUE(needs_reevaluation(r));
}

TEST(ClassifyRun, LowUsageConfidenceFlagged) {
  const auto r = classify_run(run_input({0.90, 0.10}, {0.9, 0.05, 0.05}, {0.1, 0.9}), EngineConfig{});
  EXPECT_EQ(outcome_of(r).id, 1);
  EXPECT_EQ(r.flags, std::vector<ReviewFlag>{ReviewFlag::low_confidence(StageId::Usage)});
}

TEST(ClassifyRun, TearThresholdFlag) {
  const auto r = classify_run(run_input({0.02, 0.98}, {0.9, 0.05, 0.05}, {0.75, 0.25}), EngineConfig{});
  EXPECT_EQ(outcome_of(r).id, 3);
  EXPECT_TRUE(has_flag(r, ReviewFlag::low_confidence(StageId::Tear)));
  EXPECT_TRUE(needs_reevaluation(r));
}

TEST(ClassifyRun, NewConcaveFlagsReevaluation) {
  const auto r = classify_run(run_input({0.99, 0.01}, {0.05, 0.9, 0.05}, {0.1, 0.9}, {0.6, 0.4}),
                              EngineConfig{});
  ASSERT_TRUE(r.conflicted());
  EXPECT_TRUE(has_flag(r, ReviewFlag::conflict_of(ConflictKind::NewConcave)));
  // FlagOnly still reports the level-3 decision.
  EXPECT_EQ(r.stage_decisions.count(StageId::ConcaveSeverity), 1u);
  EXPECT_TRUE(needs_reevaluation(r));
}

TEST(ClassifyRun, RejectRunStopsAfterConflict) {
  EngineConfig cfg;
  cfg.conflict_policy = ConflictPolicy::RejectRun;
  const auto r =
      classify_run(run_input({0.99, 0.01}, {0.05, 0.9, 0.05}, {0.1, 0.9}, {0.6, 0.4}), cfg);
  ASSERT_TRUE(r.conflicted());
  EXPECT_EQ(r.stage_decisions.count(StageId::ConcaveSeverity), 0u);
}

TEST(ClassifyRun, MissingSeverityInput) {
  const auto in = run_input({0.02, 0.98}, {0.05, 0.05, 0.9}, {0.1, 0.9});
  const auto r = classify_run(in, EngineConfig{});
  EXPECT_TRUE(std::holds_alternative<Incomplete>(r.verdict));
  EXPECT_TRUE(has_flag(r, ReviewFlag::missing_severity(StageId::ConvexSeverity)));
  EngineConfig reject;
  reject.conflict_policy = ConflictPolicy::RejectRun;
  try {
    classify_run(in, reject);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSeverityInput);
  }
}

TEST(ClassifyRun, RectangularNeedsNoSeverity) {
  const auto r = classify_run(run_input({0.02, 0.98}, {0.9, 0.05, 0.05}, {0.1, 0.9}),
                              EngineConfig::without_thresholds());
  EXPECT_EQ(outcome_of(r).id, 2);
}

TEST(ClassifyRun, InvalidVectorsPropagate) {
  try {
    classify_run(run_input({0.7, 0.2}, {0.9, 0.05, 0.05}, {0.1, 0.9}), EngineConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotNormalized);
  }
}

TEST(ClassifyRun, ConfigValidation) {
  EngineConfig c;
  c.thresholds[StageId::Profile] = 1.5;
  EXPECT_THROW(validate_config(c), Error);
  c = EngineConfig{};
  c.ensemble_min_runs = 0;
  EXPECT_THROW(validate_config(c), Error);
}

std::vector<double> random_probs(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& x : p) sum += (x = u(rng));
  for (auto& x : p) x /= sum;
  return p;
}

RunInput random_input(std::mt19937_64& rng) {
  return run_input(random_probs(2, rng), random_probs(3, rng), random_probs(2, rng),
                   random_probs(2, rng), random_probs(2, rng));
}

TEST(ClassifyRun, Invariants) {
  std::mt19937_64 rng(5);
  const auto table = enumerate_consistent_outcomes();
  for (int trial = 0; trial < 5000; ++trial) {
    const RunInput in = random_input(rng);
    EngineConfig cfg;
    const RunResult r = classify_run(in, cfg);
    // Branch exclusivity.
    EXPECT_FALSE(r.stage_decisions.count(StageId::ConcaveSeverity) &&
                 r.stage_decisions.count(StageId::ConvexSeverity));
    // Verdict-table closure.
    if (const auto* o = r.outcome()) {
      EXPECT_NE(std::find(table.begin(), table.end(), *o), table.end());
    }
    // Conflicted implies a conflict flag.
    if (r.conflicted()) {
      EXPECT_TRUE(std::any_of(r.flags.begin(), r.flags.end(),
                              [](const ReviewFlag& f) { return f.kind == FlagKind::Conflict; }));
    }
    // Level-3 decision present iff its branch was taken.
    const auto profile = static_cast<FlapProfile>(r.stage_decisions.at(StageId::Profile).class_index);
    EXPECT_EQ(r.stage_decisions.count(StageId::ConcaveSeverity), profile == FlapProfile::Concave ? 1u : 0u);
    EXPECT_EQ(r.stage_decisions.count(StageId::ConvexSeverity), profile == FlapProfile::Convex ? 1u : 0u);
    // Determinism.
    EXPECT_EQ(classify_run(in, cfg), r);

    // Monotone gating: lowering thresholds never adds LowConfidence flags.
    EngineConfig lower = cfg;
    for (auto& [stage, t] : lower.thresholds) t *= 0.8;
    const auto low = classify_run(in, lower);
    for (const auto& f : low.flags) EXPECT_TRUE(has_flag(r, f));
    // Absent threshold never flags.
    const auto none = classify_run(in, EngineConfig::without_thresholds());
    for (const auto& f : none.flags) EXPECT_NE(f.kind, FlagKind::LowConfidence);
  }
}

RunResult result_with(int id, double conf, const std::string& tool = "t") {
  RunResult r;
  r.tool_id = tool;
  r.verdict = outcome_by_id(id);
  r.stage_decisions[StageId::Usage] = {1, conf};
  r.stage_decisions[StageId::Profile] = {0, conf};
  r.stage_decisions[StageId::Tear] = {1, conf};
  return r;
}

TEST(Ensemble, StrictMajority) {
  std::vector<RunResult> runs = {result_with(2, 0.9), result_with(2, 0.8), result_with(3, 0.99)};
  const auto e = ensemble_classify(runs, EngineConfig{});
  EXPECT_EQ(std::get<WearOutcome>(e.verdict).id, 2);
  EXPECT_EQ(e.vote_counts, (std::map<int, int>{{2, 2}, {3, 1}}));
  EXPECT_EQ(e.runs_used, 3);
}

TEST(Ensemble, Unanimity) {
  std::vector<RunResult> runs = {result_with(4, 0.9), result_with(4, 0.95)};
  EXPECT_EQ(std::get<WearOutcome>(ensemble_classify(runs, EngineConfig{}).verdict).id, 4);
}

TEST(Ensemble, TieBrokenByConfidence) {
  std::vector<RunResult> runs = {result_with(8, 0.92), result_with(8, 0.94), result_with(10, 0.87),
                                 result_with(10, 0.89)};
  EXPECT_EQ(std::get<WearOutcome>(ensemble_classify(runs, EngineConfig{}).verdict).id, 8);
  std::vector<RunResult> flipped = {result_with(8, 0.87), result_with(8, 0.89), result_with(10, 0.92),
                                    result_with(10, 0.94)};
  EXPECT_EQ(std::get<WearOutcome>(ensemble_classify(flipped, EngineConfig{}).verdict).id, 10);
  std::vector<RunResult> equal = {result_with(10, 0.9), result_with(8, 0.9)};
  EXPECT_EQ(std::get<WearOutcome>(ensemble_classify(equal, EngineConfig{}).verdict).id, 8);
}

TEST(Ensemble, ConflictsPoolIntoOneBucket) {
  const auto a = classify_run(run_input({0.95, 0.05}, {0.9, 0.05, 0.05}, {0.97, 0.03}), EngineConfig{});
  const auto b = classify_run(run_input({0.95, 0.05}, {0.05, 0.9, 0.05}, {0.1, 0.9}, {0.5, 0.5}),
                              EngineConfig{});
  auto c = result_with(2, 0.99);
  c.tool_id = a.tool_id;
  std::vector<RunResult> runs = {a, b, c};
  const auto e = ensemble_classify(runs, EngineConfig{});
  EXPECT_EQ(e.vote_counts.at(kConflictedBucket), 2);
  const auto& kinds = std::get<Conflicted>(e.verdict).kinds;
  EXPECT_EQ(kinds, (std::vector<ConflictKind>{ConflictKind::NewWithTear, ConflictKind::NewConcave}));
}

TEST(Ensemble, Errors) {
  EngineConfig cfg;
  cfg.ensemble_min_runs = 3;
  std::vector<RunResult> two = {result_with(2, 0.9), result_with(2, 0.9)};
  try {
    ensemble_classify(two, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewRuns);
  }
  std::vector<RunResult> mixed = {result_with(2, 0.9, "a"), result_with(2, 0.9, "b")};
  try {
    ensemble_classify(mixed, EngineConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MixedTools);
  }
}

TEST(Ensemble, PermutationInvariantAndCountsSum) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<RunResult> runs;
    const int n = 2 + trial % 7;
    for (int i = 0; i < n; ++i) runs.push_back(classify_run(random_input(rng), EngineConfig{}));
    const auto base = ensemble_classify(runs, EngineConfig{});
    int total = 0;
    for (const auto& [bucket, c] : base.vote_counts) total += c;
    EXPECT_EQ(total, base.runs_used);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(runs.begin(), runs.end(), rng);
      EXPECT_EQ(ensemble_classify(runs, EngineConfig{}), base);
    }
  }
}

TEST(AssembleRuns, PositionalAndKeyed) {
  using testing::sample;
  std::vector<LabeledSample> s = {
      sample("a", StageId::Usage, {0.1, 0.9}), sample("a", StageId::Profile, {0.8, 0.1, 0.1}),
      sample("a", StageId::Tear, {0.1, 0.9}),  sample("a", StageId::Usage, {0.2, 0.8}),
      sample("a", StageId::Profile, {0.8, 0.1, 0.1}), sample("a", StageId::Tear, {0.2, 0.8}),
      sample("b", StageId::Tear, {0.1, 0.9}),  sample("b", StageId::Profile, {0.1, 0.1, 0.8}),
      sample("b", StageId::Usage, {0.1, 0.9}),  sample("b", StageId::ConvexSeverity, {0.9, 0.1}),
  };
  const auto runs = assemble_runs(s);
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_EQ(runs[0].tool_id, "a");
  EXPECT_DOUBLE_EQ(runs[1].usage.probs[0], 0.2);
  EXPECT_EQ(runs[2].tool_id, "b");
  ASSERT_TRUE(runs[2].convex_severity);

  for (auto& x : s) x.prediction.run = 7;
  try {
    assemble_runs(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  }
  std::vector<LabeledSample> partial = {sample("c", StageId::Usage, {0.1, 0.9})};
  EXPECT_THROW(assemble_runs(partial), Error);
}

TEST(Flags, Describe) {
  EXPECT_EQ(describe(ReviewFlag::low_confidence(StageId::Tear)), "low_confidence:tear");
  EXPECT_EQ(describe(ReviewFlag::conflict_of(ConflictKind::NewConvex)), "conflict:new_convex");
}

}  // namespace
}  // namespace flapwear
