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

// Report encodings: fixed-decimal rounding, machine records for run and
// ensemble results, and CSV tables for confusion matrices and ROC curves.

#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "flapwear/engine.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/taxonomy.hpp"

namespace flapwear::report {

using Json = nlohmann::ordered_json;

// Round half away from zero at `decimals` places. The nudge makes decimal
// ties that are not exactly representable (0.0005 etc.) round outward.
inline double round_to(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = x * scale;
  return std::round(scaled + std::copysign(1e-9 * std::max(1.0, std::abs(scaled)), scaled)) / scale;
}

inline std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, round_to(x, decimals));
  return buf;
}

inline std::string fixed(std::optional<double> x, int decimals) {
  return x ? fixed(*x, decimals) : std::string("n/a");
}

inline Json number(std::optional<double> x, int decimals) {
  if (!x) return Json("n/a");
  return Json(round_to(*x, decimals));
}

inline Json outcome_json(const WearOutcome& o) {
  Json j;
  j["id"] = o.id;
  j["usage"] = to_string(o.usage);
  j["profile"] = to_string(o.profile);
  j["tear"] = to_string(o.tear);
  j["severity"] = o.severity ? Json(to_string(*o.severity)) : Json(nullptr);
  return j;
}

inline void put_verdict(Json& j, const Verdict& v) {
  if (const auto* o = std::get_if<WearOutcome>(&v)) {
    j["verdict"] = "outcome";
    j["outcome_id"] = o->id;
    j["outcome"] = outcome_json(*o);
  } else if (const auto* c = std::get_if<Conflicted>(&v)) {
    j["verdict"] = "conflicted";
    Json kinds = Json::array();
    for (ConflictKind k : c->kinds) kinds.push_back(to_string(k));
    j["conflicts"] = kinds;
  } else {
    j["verdict"] = "incomplete";
  }
}

inline std::string verdict_label(const Verdict& v) {
  if (const auto* o = std::get_if<WearOutcome>(&v)) {
    return "outcome " + std::to_string(o->id) + " (" + describe(*o) + ")";
  }
  if (const auto* c = std::get_if<Conflicted>(&v)) {
    std::string s = "conflicted (";
    for (std::size_t i = 0; i < c->kinds.size(); ++i) {
      if (i) s += ", ";
      s += to_string(c->kinds[i]);
    }
    return s + ")";
  }
  return "incomplete";
}

inline Json to_json(const RunResult& r, int decimals) {
  Json j;
  j["record"] = "run";
  j["tool_id"] = r.tool_id;
  put_verdict(j, r.verdict);
  Json stages = Json::object();
  for (const auto& [stage, d] : r.stage_decisions) {
    Json s;
    s["class"] = class_name(stage, d.class_index);
    s["confidence"] = round_to(d.confidence, decimals);
    stages[std::string(to_string(stage))] = s;
  }
  j["stages"] = stages;
  Json flags = Json::array();
  for (const auto& f : r.flags) flags.push_back(describe(f));
  j["flags"] = flags;
  j["needs_reevaluation"] = needs_reevaluation(r);
  return j;
}

inline Json to_json(const EnsembleResult& e, int decimals) {
  Json j;
  j["record"] = "ensemble";
  j["tool_id"] = e.tool_id;
  put_verdict(j, e.verdict);
  Json votes = Json::object();
  for (const auto& [bucket, count] : e.vote_counts) votes[bucket_name(bucket)] = count;
  j["vote_counts"] = votes;
  Json conf = Json::object();
  for (const auto& [stage, c] : e.mean_confidence_per_stage) {
    conf[std::string(to_string(stage))] = round_to(c, decimals);
  }
  j["mean_confidence"] = conf;
  j["runs_used"] = e.runs_used;
  return j;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "truth\\predicted";
  for (std::size_t p = 0; p < cm.size(); ++p) out << ',' << class_name(cm.stage(), p);
  out << '\n';
  for (std::size_t t = 0; t < cm.size(); ++t) {
    out << class_name(cm.stage(), t);
    for (std::size_t p = 0; p < cm.size(); ++p) out << ',' << cm(t, p);
    out << '\n';
  }
  return out.str();
}

inline std::string class_metrics_csv(const ConfusionMatrix& cm, int decimals) {
  std::ostringstream out;
  out << "class,precision,recall,f1\n";
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto m = class_metrics(cm, c);
    out << class_name(cm.stage(), c) << ',' << fixed(m.precision, decimals) << ','
        << fixed(m.recall, decimals) << ',' << fixed(m.f1, decimals) << '\n';
  }
  return out.str();
}

inline std::string roc_csv_rows(const RocCurve& roc, int decimals) {
  std::ostringstream out;
  for (const auto& p : roc.points) {
    out << class_name(roc.stage, roc.positive_class) << ',' << fixed(p.fpr, decimals) << ','
        << fixed(p.tpr, decimals) << ','
        << (std::isinf(p.threshold) ? std::string("inf") : fixed(p.threshold, decimals)) << '\n';
  }
  return out.str();
}

}  // namespace flapwear::report
