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

// Wear-state type system for abrasive flap wheels and the logic tables of the
// three-level hierarchy (usage -> profile/tear -> severity).
//
// A new wheel is assumed to have a rectangular flap shape. Spherical new
// wheels are not supported: a "new" verdict with a concave or convex profile
// is always a conflict.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flapwear/error.hpp"

namespace flapwear {

enum class UsageState : std::uint8_t { New = 0, Used = 1 };
enum class FlapProfile : std::uint8_t { Rectangular = 0, Concave = 1, Convex = 2 };
enum class TearState : std::uint8_t { WithTear = 0, NoTear = 1 };
enum class Severity : std::uint8_t { Fully = 0, Partially = 1 };

// Ordered NewWithTear < NewConcave < NewConvex.
enum class ConflictKind : std::uint8_t { NewWithTear = 0, NewConcave = 1, NewConvex = 2 };

inline std::string_view to_string(UsageState v) {
  return v == UsageState::New ? "new" : "used";
}

inline std::string_view to_string(FlapProfile v) {
  switch (v) {
    case FlapProfile::Rectangular: return "rectangular";
    case FlapProfile::Concave: return "concave";
    case FlapProfile::Convex: return "convex";
  }
  return "?";
}

inline std::string_view to_string(TearState v) {
  return v == TearState::WithTear ? "with_tear" : "no_tear";
}

inline std::string_view to_string(Severity v) {
  return v == Severity::Fully ? "fully" : "partially";
}

inline std::string_view to_string(ConflictKind v) {
  switch (v) {
    case ConflictKind::NewWithTear: return "new_with_tear";
    case ConflictKind::NewConcave: return "new_concave";
    case ConflictKind::NewConvex: return "new_convex";
  }
  return "?";
}

inline std::optional<UsageState> parse_usage(std::string_view s) {
  if (s == "new") return UsageState::New;
  if (s == "used") return UsageState::Used;
  return std::nullopt;
}

inline std::optional<FlapProfile> parse_profile(std::string_view s) {
  if (s == "rectangular") return FlapProfile::Rectangular;
  if (s == "concave") return FlapProfile::Concave;
  if (s == "convex") return FlapProfile::Convex;
  return std::nullopt;
}

inline std::optional<TearState> parse_tear(std::string_view s) {
  if (s == "with_tear") return TearState::WithTear;
  if (s == "no_tear") return TearState::NoTear;
  return std::nullopt;
}

inline std::optional<Severity> parse_severity(std::string_view s) {
  if (s == "fully") return Severity::Fully;
  if (s == "partially") return Severity::Partially;
  return std::nullopt;
}

inline std::optional<ConflictKind> parse_conflict(std::string_view s) {
  if (s == "new_with_tear") return ConflictKind::NewWithTear;
  if (s == "new_concave") return ConflictKind::NewConcave;
  if (s == "new_convex") return ConflictKind::NewConvex;
  return std::nullopt;
}

inline constexpr bool needs_severity(FlapProfile p) {
  return p != FlapProfile::Rectangular;
}

// One consistent path through the hierarchy. Ids 1..11 are a stable
// serialization contract.
struct WearOutcome {
  int id = 0;
  UsageState usage = UsageState::New;
  FlapProfile profile = FlapProfile::Rectangular;
  TearState tear = TearState::NoTear;
  std::optional<Severity> severity;

  friend bool operator==(const WearOutcome&, const WearOutcome&) = default;
};

namespace detail {

inline const std::array<WearOutcome, 11>& outcome_table() {
  using U = UsageState;
  using P = FlapProfile;
  using T = TearState;
  using S = Severity;
  static const std::array<WearOutcome, 11> table = {{
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
  }};
  return table;
}

}  // namespace detail

inline constexpr int kOutcomeCount = 11;

inline std::vector<WearOutcome> enumerate_consistent_outcomes() {
  const auto& t = detail::outcome_table();
  return {t.begin(), t.end()};
}

inline const WearOutcome& outcome_by_id(int id) {
  if (id < 1 || id > kOutcomeCount) {
    throw Error(ErrorCode::InvalidArgument,
                "outcome id out of range: " + std::to_string(id));
  }
  return detail::outcome_table()[static_cast<std::size_t>(id - 1)];
}

// Empty list means consistent. Otherwise all applicable conflict kinds in
// ascending order.
inline std::vector<ConflictKind> check_consistency(UsageState usage,
                                                   FlapProfile profile,
                                                   TearState tear) {
  std::vector<ConflictKind> kinds;
  if (usage != UsageState::New) return kinds;
  if (tear == TearState::WithTear) kinds.push_back(ConflictKind::NewWithTear);
  if (profile == FlapProfile::Concave) kinds.push_back(ConflictKind::NewConcave);
  if (profile == FlapProfile::Convex) kinds.push_back(ConflictKind::NewConvex);
  return kinds;
}

inline bool is_consistent(UsageState usage, FlapProfile profile, TearState tear) {
  return check_consistency(usage, profile, tear).empty();
}

inline WearOutcome outcome_from_parts(UsageState usage, FlapProfile profile,
                                      TearState tear,
                                      std::optional<Severity> severity) {
  if (!is_consistent(usage, profile, tear)) {
    throw Error(ErrorCode::InconsistentParts,
                std::string(to_string(usage)) + "/" + std::string(to_string(profile)) +
                    "/" + std::string(to_string(tear)) + " is a conflicting path");
  }
  if (needs_severity(profile) && !severity) {
    throw Error(ErrorCode::MissingSeverity,
                std::string(to_string(profile)) + " profile requires a severity");
  }
  if (!needs_severity(profile) && severity) {
    throw Error(ErrorCode::SpuriousSeverity, "rectangular profile takes no severity");
  }
  for (const auto& o : detail::outcome_table()) {
    if (o.usage == usage && o.profile == profile && o.tear == tear &&
        o.severity == severity) {
      return o;
    }
  }
  // Unreachable: the table covers every consistent combination.
  throw Error(ErrorCode::InconsistentParts, "no matching outcome");
}

inline std::string describe(const WearOutcome& o) {
  std::string s = std::string(to_string(o.usage)) + ", " +
                  std::string(to_string(o.profile)) + ", " +
                  std::string(to_string(o.tear));
  if (o.severity) s += ", " + std::string(to_string(*o.severity));
  return s;
}

}  // namespace flapwear
