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

#include <set>

#include "flapwear/taxonomy.hpp"

namespace flapwear {
namespace {

using U = UsageState;
using P = FlapProfile;
using T = TearState;
using S = Severity;

TEST(Taxonomy, ElevenOutcomesWithStableIds) {
  const auto all = enumerate_consistent_outcomes();
  ASSERT_EQ(all.size(), 11u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].id, static_cast<int>(i + 1));
  EXPECT_EQ(all[0], (WearOutcome{1, U::New, P::Rectangular, T::NoTear, std::nullopt}));
  EXPECT_EQ(all[6], (WearOutcome{7, U::Used, P::Concave, T::WithTear, S::Fully}));
}

TEST(Taxonomy, OutcomeTableRows) {
  const std::vector<WearOutcome> expected = {
      {1, U::New, P::Rectangular, T::NoTear, std::nullopt},
      {2, U::Used, P::Rectangular, T::NoTear, std::nullopt},
      {3, U::Used, P::Rectangular, T::WithTear, std::nullopt},
      {4, U::Used, P::Concave, T::NoTear, S::Partially},
      {5, U::Used, P::Concave, T::WithTear, S::Partially},
      {6, U::Used, P::Concave, T::NoTear, S::Fully},
      {7, U::Used, P::Concave, T::WithTear, S::Fully},
      {8, U::Used, P::Convex, T::NoTear, S::Partially},
      {9, U::Used, P::Convex, T::WithTear, S::Partially},
      {10, U::Used, P::Convex, T::NoTear, S::Fully},
      {11, U::Used, P::Convex, T::WithTear, S::Fully},
  };
  EXPECT_EQ(enumerate_consistent_outcomes(), expected);
}

TEST(Taxonomy, CheckConsistencyExamples) {
  EXPECT_TRUE(check_consistency(U::New, P::Rectangular, T::NoTear).empty());
  EXPECT_EQ(check_consistency(U::New, P::Concave, T::NoTear),
            std::vector<ConflictKind>{ConflictKind::NewConcave});
  EXPECT_TRUE(check_consistency(U::Used, P::Convex, T::WithTear).empty());
  EXPECT_EQ(check_consistency(U::New, P::Rectangular, T::WithTear),
            std::vector<ConflictKind>{ConflictKind::NewWithTear});
}

TEST(Taxonomy, MultipleConflictsListedInOrder) {
  EXPECT_EQ(check_consistency(U::New, P::Concave, T::WithTear),
            (std::vector<ConflictKind>{ConflictKind::NewWithTear, ConflictKind::NewConcave}));
  EXPECT_EQ(check_consistency(U::New, P::Convex, T::WithTear),
            (std::vector<ConflictKind>{ConflictKind::NewWithTear, ConflictKind::NewConvex}));
}

TEST(Taxonomy, CrossProductClosure) {
  std::set<int> seen;
  int conflicts = 0;
  for (U u : {U::New, U::Used})
    for (P p : {P::Rectangular, P::Concave, P::Convex})
      for (T t : {T::WithTear, T::NoTear}) {
        const auto kinds = check_consistency(u, p, t);
        if (u == U::Used) {
          EXPECT_TRUE(kinds.empty());
        }
        if (!kinds.empty()) {
          ++conflicts;
          EXPECT_THROW(outcome_from_parts(u, p, t, std::nullopt), Error);
          continue;
        }
        if (!needs_severity(p)) {
          seen.insert(outcome_from_parts(u, p, t, std::nullopt).id);
        } else {
          for (S s : {S::Fully, S::Partially}) seen.insert(outcome_from_parts(u, p, t, s).id);
        }
      }
  EXPECT_EQ(seen.size(), 11u);
  EXPECT_EQ(conflicts, 5);
}

TEST(Taxonomy, OutcomeFromPartsExamples) {
  EXPECT_EQ(outcome_from_parts(U::Used, P::Concave, T::NoTear, S::Partially).id, 4);
  EXPECT_EQ(outcome_from_parts(U::Used, P::Rectangular, T::NoTear, std::nullopt).id, 2);
  try {
    outcome_from_parts(U::New, P::Rectangular, T::WithTear, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentParts);
  }
}

TEST(Taxonomy, SeverityPresenceErrors) {
  try {
    outcome_from_parts(U::Used, P::Convex, T::NoTear, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSeverity);
  }
  try {
    outcome_from_parts(U::Used, P::Rectangular, T::NoTear, S::Fully);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SpuriousSeverity);
  }
}

TEST(Taxonomy, RoundTripThroughParts) {
  for (const auto& o : enumerate_consistent_outcomes()) {
    EXPECT_EQ(outcome_from_parts(o.usage, o.profile, o.tear, o.severity), o);
    EXPECT_EQ(outcome_by_id(o.id), o);
    EXPECT_EQ(o.severity.has_value(), needs_severity(o.profile));
    if (o.usage == U::New) {
      EXPECT_EQ(o.id, 1);
    }
  }
  EXPECT_THROW(outcome_by_id(0), Error);
  EXPECT_THROW(outcome_by_id(12), Error);
}

TEST(Taxonomy, CanonicalNamesRoundTrip) {
  for (U v : {U::New, U::Used}) EXPECT_EQ(parse_usage(to_string(v)), v);
  for (P v : {P::Rectangular, P::Concave, P::Convex}) EXPECT_EQ(parse_profile(to_string(v)), v);
  for (T v : {T::WithTear, T::NoTear}) EXPECT_EQ(parse_tear(to_string(v)), v);
  for (S v : {S::Fully, S::Partially}) EXPECT_EQ(parse_severity(to_string(v)), v);
  for (auto v : {ConflictKind::NewWithTear, ConflictKind::NewConcave, ConflictKind::NewConvex}) {
    EXPECT_EQ(parse_conflict(to_string(v)), v);
  }
  EXPECT_EQ(to_string(T::WithTear), "with_tear");
  EXPECT_FALSE(parse_profile("spherical"));
}

TEST(Taxonomy, Describe) {
  EXPECT_EQ(describe(outcome_by_id(7)), "used, concave, with_tear, fully");
  EXPECT_EQ(describe(outcome_by_id(1)), "new, rectangular, no_tear");
}

}  // namespace
}  // namespace flapwear
