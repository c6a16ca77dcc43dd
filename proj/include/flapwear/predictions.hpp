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

// Per-image probability vectors emitted by the upstream stage models, the
// line-delimited prediction file format, and tool-disjoint dataset splits.
//
// Prediction file: one JSON object per line,
//   {"image_id": "...", "tool_id": "...", "view": "radial"|"axial",
//    "stage": "usage", "probs": [0.97, 0.03], "truth": "new"}
// `truth` is optional. An optional integer `run` groups records of one tool
// into classification runs (see engine). The sidecar `<file>.manifest.json`
// lists the class order of every stage.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "flapwear/error.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear {

enum class StageId : std::uint8_t {
  Usage = 0,
  Profile = 1,
  Tear = 2,
  ConcaveSeverity = 3,
  ConvexSeverity = 4,
};

inline constexpr std::array<StageId, 5> kAllStages = {
    StageId::Usage, StageId::Profile, StageId::Tear, StageId::ConcaveSeverity,
    StageId::ConvexSeverity};

enum class View : std::uint8_t { Radial = 0, Axial = 1 };

inline std::string_view to_string(View v) { return v == View::Radial ? "radial" : "axial"; }

inline std::optional<View> parse_view(std::string_view s) {
  if (s == "radial") return View::Radial;
  if (s == "axial") return View::Axial;
  return std::nullopt;
}

inline std::string_view to_string(StageId s) {
  switch (s) {
    case StageId::Usage: return "usage";
    case StageId::Profile: return "profile";
    case StageId::Tear: return "tear";
    case StageId::ConcaveSeverity: return "concave_severity";
    case StageId::ConvexSeverity: return "convex_severity";
  }
  return "?";
}

inline std::optional<StageId> parse_stage(std::string_view s) {
  for (StageId id : kAllStages) {
    if (to_string(id) == s) return id;
  }
  return std::nullopt;
}

// Class names in index order for each stage.
inline std::span<const std::string_view> stage_classes(StageId s) {
  static constexpr std::array<std::string_view, 2> usage = {"new", "used"};
  static constexpr std::array<std::string_view, 3> profile = {"rectangular", "concave",
                                                              "convex"};
  static constexpr std::array<std::string_view, 2> tear = {"with_tear", "no_tear"};
  static constexpr std::array<std::string_view, 2> severity = {"fully", "partially"};
  switch (s) {
    case StageId::Usage: return usage;
    case StageId::Profile: return profile;
    case StageId::Tear: return tear;
    case StageId::ConcaveSeverity:
    case StageId::ConvexSeverity: return severity;
  }
  return {};
}

inline std::size_t class_count(StageId s) { return stage_classes(s).size(); }

// Flap tears are judged from the axial view; everything else is radial.
inline constexpr View required_view(StageId s) {
  return s == StageId::Tear ? View::Axial : View::Radial;
}

inline std::optional<std::size_t> class_index(StageId s, std::string_view name) {
  auto classes = stage_classes(s);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return i;
  }
  return std::nullopt;
}

inline std::string_view class_name(StageId s, std::size_t index) {
  auto classes = stage_classes(s);
  if (index >= classes.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "class index " + std::to_string(index) +
                                                " out of range for stage " +
                                                std::string(to_string(s)));
  }
  return classes[index];
}

inline constexpr double kProbabilitySumTolerance = 1e-6;

struct ProbabilityVector {
  StageId stage = StageId::Usage;
  std::vector<double> probs;

  friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;
};

struct VectorIssue {
  ErrorCode code;
  std::string message;
  // |sum - 1| for NotNormalized, 0 otherwise.
  double deviation = 0.0;
};

// Empty result means valid. Vectors are never renormalized.
inline std::optional<VectorIssue> validate_vector(const ProbabilityVector& v) {
  const std::size_t n = class_count(v.stage);
  if (v.probs.size() != n) {
    return VectorIssue{ErrorCode::BadLength,
                       "stage " + std::string(to_string(v.stage)) + " expects " +
                           std::to_string(n) + " probabilities, got " +
                           std::to_string(v.probs.size())};
  }
  double sum = 0.0;
  for (double p : v.probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      std::ostringstream msg;
      msg << "probability " << p << " outside [0, 1]";
      return VectorIssue{ErrorCode::OutOfRange, msg.str()};
    }
    sum += p;
  }
  const double deviation = std::abs(sum - 1.0);
  if (deviation > kProbabilitySumTolerance) {
    std::ostringstream msg;
    msg << "probabilities sum to " << sum << " (deviation " << deviation << ")";
    return VectorIssue{ErrorCode::NotNormalized, msg.str(), deviation};
  }
  return std::nullopt;
}

inline void require_valid(const ProbabilityVector& v) {
  if (auto issue = validate_vector(v)) throw Error(issue->code, issue->message);
}

// Ties resolve to the lowest class index.
inline std::size_t argmax_class(const ProbabilityVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.probs.size(); ++i) {
    if (v.probs[i] > v.probs[best]) best = i;
  }
  return best;
}

// Confidence is the maximum class probability.
inline double confidence(const ProbabilityVector& v) { return v.probs.at(argmax_class(v)); }

struct Prediction {
  std::string image_id;
  std::string tool_id;
  View view = View::Radial;
  ProbabilityVector vector;
  // Optional grouping key for classification runs.
  std::optional<std::int64_t> run;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct LabeledSample {
  Prediction prediction;
  std::optional<std::size_t> truth;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

inline std::optional<VectorIssue> validate_prediction(const Prediction& p) {
  if (auto issue = validate_vector(p.vector)) return issue;
  if (p.view != required_view(p.vector.stage)) {
    return VectorIssue{ErrorCode::ViewMismatch,
                       "stage " + std::string(to_string(p.vector.stage)) + " requires " +
                           std::string(to_string(required_view(p.vector.stage))) +
                           " view, got " + std::string(to_string(p.view))};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Record encoding

inline nlohmann::ordered_json to_json(const LabeledSample& s) {
  const Prediction& p = s.prediction;
  nlohmann::ordered_json j;
  j["image_id"] = p.image_id;
  j["tool_id"] = p.tool_id;
  j["view"] = to_string(p.view);
  j["stage"] = to_string(p.vector.stage);
  j["probs"] = p.vector.probs;
  if (s.truth) j["truth"] = class_name(p.vector.stage, *s.truth);
  if (p.run) j["run"] = *p.run;
  return j;
}

namespace detail {

inline std::string require_string(const nlohmann::json& j, const char* key,
                                  std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::ParseError, std::string("missing or non-string field '") + key + "'",
                line);
  }
  return it->get<std::string>();
}

}  // namespace detail

// Decodes one record; `line` only annotates errors.
inline LabeledSample sample_from_json(const nlohmann::json& j, std::size_t line = 0) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "record is not an object", line);
  LabeledSample s;
  Prediction& p = s.prediction;
  p.image_id = detail::require_string(j, "image_id", line);
  p.tool_id = detail::require_string(j, "tool_id", line);
  const std::string view = detail::require_string(j, "view", line);
  const std::string stage = detail::require_string(j, "stage", line);
  auto parsed_view = parse_view(view);
  if (!parsed_view) throw Error(ErrorCode::ParseError, "unknown view '" + view + "'", line);
  auto parsed_stage = parse_stage(stage);
  if (!parsed_stage) throw Error(ErrorCode::ParseError, "unknown stage '" + stage + "'", line);
  p.view = *parsed_view;
  p.vector.stage = *parsed_stage;

  auto probs = j.find("probs");
  if (probs == j.end() || !probs->is_array()) {
    throw Error(ErrorCode::ParseError, "missing or non-array field 'probs'", line);
  }
  for (const auto& value : *probs) {
    if (!value.is_number()) {
      throw Error(ErrorCode::ParseError, "non-numeric probability " + value.dump(), line);
    }
    p.vector.probs.push_back(value.get<double>());
  }

  if (auto run = j.find("run"); run != j.end()) {
    if (!run->is_number_integer()) throw Error(ErrorCode::ParseError, "'run' must be an integer", line);
    p.run = run->get<std::int64_t>();
  }

  if (auto issue = validate_prediction(p)) {
    throw Error(ErrorCode::ValidationError, issue->message, line, issue->code);
  }

  if (auto truth = j.find("truth"); truth != j.end() && !truth->is_null()) {
    if (!truth->is_string()) throw Error(ErrorCode::ParseError, "'truth' must be a string", line);
    const std::string name = truth->get<std::string>();
    auto index = class_index(p.vector.stage, name);
    if (!index) {
      throw Error(ErrorCode::ValidationError,
                  "truth '" + name + "' is not a class of stage " + stage, line,
                  ErrorCode::InvalidArgument);
    }
    s.truth = *index;
  }
  return s;
}

inline nlohmann::ordered_json stage_manifest() {
  nlohmann::ordered_json m;
  m["format"] = "flapwear-predictions";
  m["version"] = 1;
  nlohmann::ordered_json stages;
  for (StageId s : kAllStages) {
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (auto name : stage_classes(s)) classes.push_back(name);
    stages[std::string(to_string(s))] = classes;
  }
  m["stages"] = stages;
  return m;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".manifest.json");
}

// Checks a sidecar manifest against the built-in class orders. A missing
// manifest is accepted.
inline void check_manifest(const std::filesystem::path& file) {
  const auto path = manifest_path(file);
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "manifest " + path.string() + ": " + e.what());
  }
  auto stages = m.find("stages");
  if (stages == m.end() || !stages->is_object()) {
    throw Error(ErrorCode::ParseError, "manifest " + path.string() + " has no 'stages' object");
  }
  for (auto it = stages->begin(); it != stages->end(); ++it) {
    auto stage = parse_stage(it.key());
    if (!stage) {
      throw Error(ErrorCode::ValidationError, "manifest lists unknown stage '" + it.key() + "'");
    }
    std::vector<std::string> expected(stage_classes(*stage).begin(), stage_classes(*stage).end());
    if (!it.value().is_array() || it.value().get<std::vector<std::string>>() != expected) {
      throw Error(ErrorCode::ValidationError,
                  "manifest class order for stage '" + it.key() + "' differs from " +
                      nlohmann::json(expected).dump());
    }
  }
}

inline std::vector<LabeledSample> parse_prediction_stream(std::istream& in) {
  std::vector<LabeledSample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, e.what(), line);
    }
    out.push_back(sample_from_json(j, line));
  }
  return out;
}

inline std::vector<LabeledSample> parse_prediction_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  check_manifest(path);
  return parse_prediction_stream(in);
}

inline void write_prediction_stream(std::ostream& out, std::span<const LabeledSample> samples) {
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

// Writes the records and their sidecar manifest.
inline void write_prediction_file(const std::filesystem::path& path,
                                  std::span<const LabeledSample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_prediction_stream(out, samples);
  std::ofstream manifest(manifest_path(path));
  manifest << stage_manifest().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Tool-disjoint splitting

struct DatasetSplit {
  std::set<std::string> train_tools;
  std::set<std::string> val_tools;
  std::set<std::string> test_tools;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

// Assigns whole tools, never single images, to train/val/test. Subset sizes
// follow the largest-remainder rounding of fraction * tool count.
inline DatasetSplit split_by_tool(std::span<const LabeledSample> samples,
                                  std::array<double, 3> fractions, std::uint64_t seed) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no samples to split");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must be >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1");
  }

  std::set<std::string> unique;
  for (const auto& s : samples) unique.insert(s.prediction.tool_id);
  std::vector<std::string> tools(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(tools.begin(), tools.end(), rng);

  const std::size_t n = tools.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  DatasetSplit split;
  std::size_t k = 0;
  for (std::size_t i = 0; i < counts[0]; ++i) split.train_tools.insert(tools[k++]);
  for (std::size_t i = 0; i < counts[1]; ++i) split.val_tools.insert(tools[k++]);
  while (k < n) split.test_tools.insert(tools[k++]);
  return split;
}

struct SplitSamples {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

inline SplitSamples apply_split(std::span<const LabeledSample> samples, const DatasetSplit& split) {
  SplitSamples out;
  for (const auto& s : samples) {
    const auto& tool = s.prediction.tool_id;
    if (split.train_tools.count(tool)) {
      out.train.push_back(s);
    } else if (split.val_tools.count(tool)) {
      out.val.push_back(s);
    } else if (split.test_tools.count(tool)) {
      out.test.push_back(s);
    } else {
      throw Error(ErrorCode::InvalidArgument, "tool '" + tool + "' not covered by split");
    }
  }
  return out;
}

}  // namespace flapwear
