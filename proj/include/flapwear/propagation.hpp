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

// Accuracy propagation through the hierarchy. A run is correct only if every
// stage on its path is correct; with independent stages the path accuracy is
// the product of the stage accuracies:
//
//   rectangular  J_usage * J_tear * J_profile
//   concave      J_usage * J_tear * J_profile * J_concave
//   convex       J_usage * J_tear * J_profile * J_convex

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flapwear/engine.hpp"
#include "flapwear/error.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/random.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear {

struct StageAccuracies {
  double j_usage = 1.0;
  double j_tear = 1.0;
  double j_profile = 1.0;
  double j_concave = 1.0;
  double j_convex = 1.0;

  // Accuracies reported for the individual models.
  static StageAccuracies reference() { return {0.986, 0.938, 0.954, 0.993, 0.950}; }
};

inline void validate(const StageAccuracies& a) {
  for (double j : {a.j_usage, a.j_tear, a.j_profile, a.j_concave, a.j_convex}) {
    if (!(j >= 0.0 && j <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "stage accuracy outside [0, 1]");
    }
  }
}

inline double path_accuracy(const StageAccuracies& acc, FlapProfile branch) {
  const double base = acc.j_usage * acc.j_tear * acc.j_profile;
  switch (branch) {
    case FlapProfile::Rectangular: return base;
    case FlapProfile::Concave: return base * acc.j_concave;
    case FlapProfile::Convex: return base * acc.j_convex;
  }
  return base;
}

struct AccuracyInterval {
  double min = 0.0;
  double max = 0.0;
};

inline AccuracyInterval accuracy_interval(const StageAccuracies& acc) {
  const std::array<double, 3> paths = {path_accuracy(acc, FlapProfile::Rectangular),
                                       path_accuracy(acc, FlapProfile::Concave),
                                       path_accuracy(acc, FlapProfile::Convex)};
  const auto [lo, hi] = std::minmax_element(paths.begin(), paths.end());
  return {*lo, *hi};
}

// Fractions of runs on the rectangular, concave and convex branches.
using BranchMix = std::array<double, 3>;

inline void validate_mix(const BranchMix& mix) {
  double sum = 0.0;
  for (double m : mix) {
    if (!(m >= 0.0)) throw Error(ErrorCode::BadMix, "branch fractions must be >= 0");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::BadMix, "branch fractions must sum to 1");
}

inline double mixed_path_accuracy(const StageAccuracies& acc, const BranchMix& mix) {
  validate_mix(mix);
  return mix[0] * path_accuracy(acc, FlapProfile::Rectangular) +
         mix[1] * path_accuracy(acc, FlapProfile::Concave) +
         mix[2] * path_accuracy(acc, FlapProfile::Convex);
}

// ---------------------------------------------------------------------------
// Re-examination accounting

struct ThresholdCatch {
  std::uint64_t errors_caught = 0;
  std::uint64_t correct_flagged = 0;
};

struct CorrectionLedger {
  std::uint64_t total_runs = 0;
  std::uint64_t total_errors = 0;
  std::map<StageId, ThresholdCatch> threshold_caught;
  std::uint64_t conflict_caught = 0;
  // true: conflict catches are a subset of the threshold catches.
  bool conflicts_overlap_thresholds = false;

  std::uint64_t threshold_errors_caught() const {
    std::uint64_t s = 0;
    for (const auto& [stage, c] : threshold_caught) s += c.errors_caught;
    return s;
  }
};

inline void validate(const CorrectionLedger& l) {
  if (l.total_runs == 0) throw Error(ErrorCode::LedgerInconsistent, "ledger has no runs");
  if (l.total_errors > l.total_runs) {
    throw Error(ErrorCode::LedgerInconsistent, "more errors than runs");
  }
  std::uint64_t caught = l.threshold_errors_caught();
  if (!l.conflicts_overlap_thresholds) caught += l.conflict_caught;
  if (caught > l.total_errors) {
    throw Error(ErrorCode::LedgerInconsistent,
                "caught errors (" + std::to_string(caught) + ") exceed total errors (" +
                    std::to_string(l.total_errors) + ")");
  }
  if (l.conflict_caught > l.total_errors) {
    throw Error(ErrorCode::LedgerInconsistent, "conflict catches exceed total errors");
  }
  for (const auto& [stage, c] : l.threshold_caught) {
    if (c.correct_flagged > l.total_runs - l.total_errors) {
      throw Error(ErrorCode::LedgerInconsistent,
                  "flagged correct runs exceed correct runs for " + std::string(to_string(stage)));
    }
  }
}

struct CorrectedBounds {
  double low = 0.0;
  double high = 0.0;
};

// Accuracy if every caught error is fixed on re-examination. `low` counts
// conflicts as already contained in the threshold catches, `high` counts them
// on top (equal to `low` when the ledger says they overlap).
inline CorrectedBounds corrected_accuracy(const CorrectionLedger& ledger) {
  validate(ledger);
  const double runs = static_cast<double>(ledger.total_runs);
  const std::uint64_t base = ledger.total_runs - ledger.total_errors + ledger.threshold_errors_caught();
  const std::uint64_t extra = ledger.conflicts_overlap_thresholds ? 0 : ledger.conflict_caught;
  return {static_cast<double>(base) / runs, static_cast<double>(base + extra) / runs};
}

// Generalization for re-examinations that are themselves fallible: each
// re-examined run (caught error or flagged correct run) ends up correct with
// probability `recheck_accuracy`. A value of 1 gives corrected_accuracy(); the
// run's own hierarchy accuracy models a fresh image; 0 models re-scoring the
// same image without new evidence for the errors.
inline CorrectedBounds corrected_accuracy(const CorrectionLedger& ledger, double recheck_accuracy) {
  validate(ledger);
  if (!(recheck_accuracy >= 0.0 && recheck_accuracy <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "recheck accuracy outside [0, 1]");
  }
  std::uint64_t flagged_correct = 0;
  for (const auto& [stage, c] : ledger.threshold_caught) flagged_correct += c.correct_flagged;
  flagged_correct = std::min(flagged_correct, ledger.total_runs - ledger.total_errors);
  const double runs = static_cast<double>(ledger.total_runs);
  const double untouched_correct =
      static_cast<double>(ledger.total_runs - ledger.total_errors - flagged_correct);
  const double q = recheck_accuracy;
  const double caught_low = static_cast<double>(ledger.threshold_errors_caught());
  const double caught_high =
      caught_low +
      (ledger.conflicts_overlap_thresholds ? 0.0 : static_cast<double>(ledger.conflict_caught));
  const double rechecked_correct = q * static_cast<double>(flagged_correct);
  return {(untouched_correct + rechecked_correct + q * caught_low) / runs,
          (untouched_correct + rechecked_correct + q * caught_high) / runs};
}

// Adds one run to a ledger. An erroneous run is attributed to the first stage
// (in stage order) whose threshold flagged it. Conflicted errors without any
// threshold flag are counted as conflict catches, so a ledger built this way
// is exact and non-overlapping.
inline void record_run(CorrectionLedger& l, const RunResult& r, const WearOutcome& truth) {
  ++l.total_runs;
  const WearOutcome* o = r.outcome();
  const bool correct = o && o->id == truth.id;
  std::optional<StageId> flagged;
  for (const auto& f : r.flags) {
    if (f.kind == FlagKind::LowConfidence && (!flagged || f.stage < *flagged)) flagged = f.stage;
  }
  if (correct) {
    if (flagged) ++l.threshold_caught[*flagged].correct_flagged;
    return;
  }
  ++l.total_errors;
  if (flagged) {
    ++l.threshold_caught[*flagged].errors_caught;
  } else if (r.conflicted()) {
    ++l.conflict_caught;
  }
}

inline void merge_into(CorrectionLedger& into, const CorrectionLedger& from) {
  into.total_runs += from.total_runs;
  into.total_errors += from.total_errors;
  into.conflict_caught += from.conflict_caught;
  for (const auto& [stage, c] : from.threshold_caught) {
    into.threshold_caught[stage].errors_caught += c.errors_caught;
    into.threshold_caught[stage].correct_flagged += c.correct_flagged;
  }
}

inline CorrectionLedger build_ledger(std::span<const RunResult> results,
                                     std::span<const WearOutcome> truths) {
  if (results.size() != truths.size()) {
    throw Error(ErrorCode::InvalidArgument, "one true outcome per run is required");
  }
  CorrectionLedger l;
  for (std::size_t i = 0; i < results.size(); ++i) record_run(l, results[i], truths[i]);
  return l;
}

// ---------------------------------------------------------------------------
// Monte-Carlo check of the independence model

struct MonteCarloResult {
  double accuracy = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  std::array<std::uint64_t, 3> branch_trials{};
  std::array<std::uint64_t, 3> branch_successes{};
};

inline constexpr std::uint64_t kMonteCarloShard = 1u << 16;

// Each trial picks a branch from `mix` and succeeds if every stage on the path
// succeeds, stage s independently with probability J_s. Trials are split into
// fixed-size shards with derived seeds, so the result depends only on
// (inputs, seed) and not on scheduling.
inline MonteCarloResult monte_carlo_hierarchy(const StageAccuracies& acc, const BranchMix& mix,
                                              std::uint64_t n_trials, std::uint64_t seed) {
  validate(acc);
  validate_mix(mix);
  if (n_trials == 0) throw Error(ErrorCode::InvalidArgument, "n_trials must be >= 1");

  auto run_shard = [&](std::uint64_t shard, std::uint64_t count) {
    MonteCarloResult part;
    Rng rng(derive_seed(seed, shard));
    for (std::uint64_t t = 0; t < count; ++t) {
      const double u = unit_uniform(rng);
      const std::size_t b = u < mix[0] ? 0 : (u < mix[0] + mix[1] ? 1 : 2);
      bool ok = unit_uniform(rng) < acc.j_usage;
      ok &= unit_uniform(rng) < acc.j_tear;
      ok &= unit_uniform(rng) < acc.j_profile;
      const double sev = unit_uniform(rng);
      if (b == 1) ok &= sev < acc.j_concave;
      if (b == 2) ok &= sev < acc.j_convex;
      ++part.branch_trials[b];
      if (ok) ++part.branch_successes[b];
    }
    return part;
  };

  const std::uint64_t shards = (n_trials + kMonteCarloShard - 1) / kMonteCarloShard;
  std::vector<std::future<MonteCarloResult>> futures;
  futures.reserve(shards);
  for (std::uint64_t s = 0; s < shards; ++s) {
    const std::uint64_t count = std::min(kMonteCarloShard, n_trials - s * kMonteCarloShard);
    futures.push_back(std::async(std::launch::async, run_shard, s, count));
  }
  MonteCarloResult out;
  for (auto& f : futures) {
    const MonteCarloResult part = f.get();
    for (std::size_t b = 0; b < 3; ++b) {
      out.branch_trials[b] += part.branch_trials[b];
      out.branch_successes[b] += part.branch_successes[b];
    }
  }
  for (std::size_t b = 0; b < 3; ++b) {
    out.trials += out.branch_trials[b];
    out.successes += out.branch_successes[b];
  }
  out.accuracy = static_cast<double>(out.successes) / static_cast<double>(out.trials);
  return out;
}

}  // namespace flapwear
