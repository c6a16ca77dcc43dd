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

// Command implementations behind the `flapwear` executable. Each command reads
// its inputs, writes a human-readable table and machine-readable records into
// the report directory, and returns a process exit code. Wall-clock data is
// confined to metadata.json so every other report file is reproducible.

#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flapwear/engine.hpp"
#include "flapwear/error.hpp"
#include "flapwear/metrics.hpp"
#include "flapwear/predictions.hpp"
#include "flapwear/propagation.hpp"
#include "flapwear/report.hpp"
#include "flapwear/simulation.hpp"
#include "flapwear/synth.hpp"

namespace flapwear::cli {

using report::Json;

enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitValidation = 3,
  kExitConfig = 4,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::IoError: return kExitParse;
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::BadMix:
    case ErrorCode::BadRow:
    case ErrorCode::InvalidSpec: return kExitConfig;
    default: return kExitValidation;
  }
}

struct CliConfig {
  EngineConfig engine;
  std::filesystem::path report_dir = "report";
  std::uint64_t seed = 0;
  int rounding = 3;
};

// ---------------------------------------------------------------------------
// Flat key-value text: `key = value` per line, `#` starts a comment.

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<KeyValue> parse_key_values(std::istream& in) {
  std::vector<KeyValue> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    if (trim(text).empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "expected 'key = value'", line);
    KeyValue kv{trim(std::string_view(text).substr(0, eq)),
                trim(std::string_view(text).substr(eq + 1)), line};
    if (kv.key.empty()) throw Error(ErrorCode::ConfigError, "empty key", line);
    out.push_back(std::move(kv));
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line = 0) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "not a number: '" + s + "'", line);
  }
}

inline std::int64_t parse_int(const std::string& s, std::size_t line = 0) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "not an integer: '" + s + "'", line);
  }
}

inline bool parse_bool(const std::string& s, std::size_t line = 0) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorCode::ConfigError, "not a boolean: '" + s + "'", line);
}

inline StageId parse_stage_or_throw(const std::string& s, std::size_t line = 0) {
  auto stage = parse_stage(s);
  if (!stage) throw Error(ErrorCode::ConfigError, "unknown stage '" + s + "'", line);
  return *stage;
}

// `stage=value`; the value `none` removes the threshold.
inline void apply_threshold(EngineConfig& engine, const std::string& assignment,
                            std::size_t line = 0) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "threshold must be stage=value: '" + assignment + "'", line);
  }
  const StageId stage = parse_stage_or_throw(trim(assignment.substr(0, eq)), line);
  const std::string value = trim(assignment.substr(eq + 1));
  if (value == "none") {
    engine.thresholds.erase(stage);
    return;
  }
  const double t = parse_double(value, line);
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::ConfigError, "threshold outside [0, 1]", line);
  engine.thresholds[stage] = t;
}

// Keys: report_dir, seed, rounding, conflict_policy (flag_only|reject_run),
// ensemble_min_runs, thresholds (= none clears all), threshold.<stage>.
inline CliConfig parse_config(std::istream& in, CliConfig base = {}) {
  for (const auto& kv : parse_key_values(in)) {
    if (kv.key == "report_dir") {
      base.report_dir = kv.value;
    } else if (kv.key == "seed") {
      const auto v = parse_int(kv.value, kv.line);
      if (v < 0) throw Error(ErrorCode::ConfigError, "seed must be >= 0", kv.line);
      base.seed = static_cast<std::uint64_t>(v);
    } else if (kv.key == "rounding") {
      const auto v = parse_int(kv.value, kv.line);
      if (v < 1 || v > 12) throw Error(ErrorCode::ConfigError, "rounding must be in 1..12", kv.line);
      base.rounding = static_cast<int>(v);
    } else if (kv.key == "conflict_policy") {
      auto p = parse_conflict_policy(kv.value);
      if (!p) throw Error(ErrorCode::ConfigError, "unknown conflict_policy '" + kv.value + "'", kv.line);
      base.engine.conflict_policy = *p;
    } else if (kv.key == "ensemble_min_runs") {
      const auto v = parse_int(kv.value, kv.line);
      if (v < 1) throw Error(ErrorCode::ConfigError, "ensemble_min_runs must be >= 1", kv.line);
      base.engine.ensemble_min_runs = static_cast<int>(v);
    } else if (kv.key == "thresholds") {
      if (kv.value != "none") throw Error(ErrorCode::ConfigError, "thresholds only accepts 'none'", kv.line);
      base.engine.thresholds.clear();
    } else if (kv.key.rfind("threshold.", 0) == 0) {
      apply_threshold(base.engine, kv.key.substr(10) + "=" + kv.value, kv.line);
    } else {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + kv.key + "'", kv.line);
    }
  }
  return base;
}

inline CliConfig load_config(const std::filesystem::path& path, CliConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

// ---------------------------------------------------------------------------
// Report directory

class ReportWriter {
 public:
  ReportWriter(std::filesystem::path dir, std::string command)
      : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
      throw Error(ErrorCode::ConfigError, "report directory not writable: " + dir_.string());
    }
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back(name);
  }

  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  // The only file with wall-clock content.
  void finish() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    Json meta;
    meta["command"] = command_;
    meta["generated_at"] = stamp;
    meta["files"] = files_;
    std::ofstream out(dir_ / "metadata.json");
    out << meta.dump(2) << "\n";
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::string> files_;
};

inline Json config_json(const CliConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["rounding"] = c.rounding;
  j["conflict_policy"] = to_string(c.engine.conflict_policy);
  j["ensemble_min_runs"] = c.engine.ensemble_min_runs;
  Json t = Json::object();
  for (const auto& [stage, v] : c.engine.thresholds) t[std::string(to_string(stage))] = v;
  j["thresholds"] = t;
  return j;
}

// Runs `body`, mapping library errors onto exit codes with file context.
template <typename Body>
int guarded(const std::string& context, std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << context << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << context << ": " << e.what() << "\n";
    return kExitParse;
  }
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyOutput {
  std::vector<RunResult> runs;
  std::vector<EnsembleResult> ensembles;
  std::vector<std::string> warnings;
};

inline ClassifyOutput classify_samples(std::span<const LabeledSample> samples,
                                       const EngineConfig& engine) {
  validate_config(engine);
  ClassifyOutput out;
  const std::vector<RunInput> inputs = assemble_runs(samples);
  out.runs.reserve(inputs.size());
  for (const auto& in : inputs) out.runs.push_back(classify_run(in, engine));

  std::vector<std::string> order;
  std::map<std::string, std::vector<RunResult>> by_tool;
  for (const auto& r : out.runs) {
    auto [it, inserted] = by_tool.try_emplace(r.tool_id);
    if (inserted) order.push_back(r.tool_id);
    it->second.push_back(r);
  }
  for (const auto& tool : order) {
    const auto& runs = by_tool[tool];
    if (runs.size() < 2) continue;
    if (static_cast<int>(runs.size()) < engine.ensemble_min_runs) {
      out.warnings.push_back("tool '" + tool + "': " + std::to_string(runs.size()) +
                             " runs, fewer than ensemble_min_runs; no ensemble");
      continue;
    }
    out.ensembles.push_back(ensemble_classify(runs, engine));
  }
  return out;
}

inline int cmd_classify(const std::filesystem::path& prediction_file, const CliConfig& cfg,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(prediction_file.string(), err, [&] {
    const auto samples = parse_prediction_file(prediction_file);
    const ClassifyOutput result = classify_samples(samples, cfg.engine);
    const int d = cfg.rounding;

    ReportWriter writer(cfg.report_dir, "classify");
    std::string runs_text, ens_text;
    for (const auto& r : result.runs) runs_text += report::to_json(r, d).dump() + "\n";
    for (const auto& e : result.ensembles) ens_text += report::to_json(e, d).dump() + "\n";
    writer.write("runs.jsonl", runs_text);
    writer.write("ensembles.jsonl", ens_text);

    std::ostringstream table;
    table << "tool\tverdict\tflags\n";
    for (const auto& r : result.runs) {
      table << r.tool_id << '\t' << report::verdict_label(r.verdict) << '\t';
      for (std::size_t i = 0; i < r.flags.size(); ++i) table << (i ? "," : "") << describe(r.flags[i]);
      table << '\n';
    }
    for (const auto& e : result.ensembles) {
      table << e.tool_id << "\tensemble of " << e.runs_used << ": "
            << report::verdict_label(e.verdict) << '\n';
    }
    for (const auto& w : result.warnings) table << "warning: " << w << '\n';
    writer.write("classify.txt", table.str());

    Json summary;
    summary["command"] = "classify";
    summary["config"] = config_json(cfg);
    summary["runs"] = result.runs.size();
    summary["ensembles"] = result.ensembles.size();
    std::size_t flagged = 0, conflicted = 0;
    for (const auto& r : result.runs) {
      flagged += needs_reevaluation(r);
      conflicted += r.conflicted();
    }
    summary["runs_needing_reevaluation"] = flagged;
    summary["runs_conflicted"] = conflicted;
    summary["warnings"] = result.warnings;
    writer.write_json("summary.json", summary);
    writer.finish();
    out << table.str();
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// evaluate

inline Json evaluate_stage(StageId stage, std::span<const LabeledSample> samples, int d,
                           ReportWriter& writer, std::ostream& table) {
  const std::string name(to_string(stage));
  const ConfusionMatrix cm = confusion_from_samples(stage, samples);
  Json j;
  j["samples"] = cm.total();
  j["confusion"] = cm.rows();
  j["accuracy"] = report::round_to(accuracy(cm), d);
  Json notices = Json::array();
  try {
    j["macro_f1"] = report::round_to(macro_f1(cm), d);
  } catch (const Error& e) {
    j["macro_f1"] = "n/a";
    notices.push_back(std::string(to_string(e.code())) + ": " + e.what());
  }
  Json classes = Json::object();
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto m = class_metrics(cm, c);
    Json cj;
    cj["precision"] = report::number(m.precision, d);
    cj["recall"] = report::number(m.recall, d);
    cj["f1"] = report::number(m.f1, d);
    classes[std::string(class_name(stage, c))] = cj;
  }
  j["classes"] = classes;

  const ConfidenceStats cs = confidence_stats(stage, samples);
  j["confidence"] = {{"mean_all", report::round_to(cs.mean_all, d)},
                     {"mean_false", report::number(cs.mean_false, d)},
                     {"count_all", cs.count_all},
                     {"count_false", cs.count_false}};

  Json auc = Json::object();
  std::string roc_text = "class,fpr,tpr,threshold\n";
  bool any_roc = false;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const std::string cname(class_name(stage, c));
    try {
      const RocCurve roc = roc_for_class(stage, c, samples);
      auc[cname] = report::round_to(roc.auc, d);
      roc_text += report::roc_csv_rows(roc, std::max(d, 6));
      any_roc = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
      auc[cname] = "n/a";
      notices.push_back("DegenerateInput: ROC for class " + cname + " needs positive and negative samples");
    }
  }
  j["auc"] = auc;
  j["notices"] = notices;

  writer.write(name + "_confusion.csv", report::confusion_csv(cm));
  writer.write(name + "_metrics.csv", report::class_metrics_csv(cm, d));
  if (any_roc) writer.write(name + "_roc.csv", roc_text);

  table << "== " << name << " (" << cm.total() << " samples)\n";
  table << report::confusion_csv(cm) << report::class_metrics_csv(cm, d);
  table << "accuracy " << report::fixed(accuracy(cm), d) << ", macro-F1 "
        << (j["macro_f1"].is_string() ? std::string("n/a") : report::fixed(macro_f1(cm), d))
        << ", mean confidence " << report::fixed(cs.mean_all, d) << " (false: "
        << report::fixed(cs.mean_false, d) << ")\n";
  for (const auto& n : notices) table << "notice: " << n.get<std::string>() << '\n';
  return j;
}

inline int cmd_evaluate(const std::filesystem::path& labeled_file, const CliConfig& cfg,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(labeled_file.string(), err, [&] {
    const auto samples = parse_prediction_file(labeled_file);
    const int d = cfg.rounding;
    ReportWriter writer(cfg.report_dir, "evaluate");
    std::ostringstream table;
    Json stages = Json::object();
    Json warnings = Json::array();
    Json accuracies = Json::object();
    for (StageId stage : kAllStages) {
      const bool any = std::any_of(samples.begin(), samples.end(), [&](const LabeledSample& s) {
        return s.prediction.vector.stage == stage && s.truth;
      });
      const std::string name(to_string(stage));
      if (!any) {
        warnings.push_back("EmptyStage: no labeled samples for " + name + "; skipped");
        continue;
      }
      stages[name] = evaluate_stage(stage, samples, d, writer, table);
      accuracies[name] = stages[name]["accuracy"];
    }
    if (stages.empty()) throw Error(ErrorCode::ValidationError, "no labeled samples in file");
    Json summary;
    summary["command"] = "evaluate";
    summary["config"] = config_json(cfg);
    summary["stages"] = stages;
    summary["stage_accuracies"] = accuracies;
    summary["warnings"] = warnings;
    writer.write_json("summary.json", summary);
    for (const auto& w : warnings) table << "warning: " << w.get<std::string>() << '\n';
    writer.write("evaluate.txt", table.str());
    writer.finish();
    out << table.str();
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// propagate

struct PropagationInput {
  StageAccuracies accuracies;
  std::optional<CorrectionLedger> ledger;
  std::optional<BranchMix> mix;
};

inline std::vector<double> split_numbers(const std::string& s, std::size_t line) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_double(trim(part), line));
  return out;
}

// Key-value record:
//   j_usage, j_tear, j_profile, j_concave, j_convex
//   mix = rect,concave,convex
//   ledger.total_runs, ledger.total_errors, ledger.conflict_caught,
//   ledger.conflicts_overlap_thresholds, ledger.threshold.<stage> = caught,correct_flagged
inline PropagationInput parse_propagation_record(std::istream& in) {
  PropagationInput p;
  std::map<std::string, bool> seen;
  CorrectionLedger ledger;
  bool has_ledger = false;
  for (const auto& kv : parse_key_values(in)) {
    seen[kv.key] = true;
    auto count = [&] {
      const auto v = parse_int(kv.value, kv.line);
      if (v < 0) throw Error(ErrorCode::ConfigError, kv.key + " must be >= 0", kv.line);
      return static_cast<std::uint64_t>(v);
    };
    if (kv.key == "j_usage") p.accuracies.j_usage = parse_double(kv.value, kv.line);
    else if (kv.key == "j_tear") p.accuracies.j_tear = parse_double(kv.value, kv.line);
    else if (kv.key == "j_profile") p.accuracies.j_profile = parse_double(kv.value, kv.line);
    else if (kv.key == "j_concave") p.accuracies.j_concave = parse_double(kv.value, kv.line);
    else if (kv.key == "j_convex") p.accuracies.j_convex = parse_double(kv.value, kv.line);
    else if (kv.key == "mix") {
      const auto v = split_numbers(kv.value, kv.line);
      if (v.size() != 3) throw Error(ErrorCode::ConfigError, "mix needs three fractions", kv.line);
      p.mix = BranchMix{v[0], v[1], v[2]};
    } else if (kv.key == "ledger.total_runs") {
      ledger.total_runs = count();
      has_ledger = true;
    } else if (kv.key == "ledger.total_errors") {
      ledger.total_errors = count();
      has_ledger = true;
    } else if (kv.key == "ledger.conflict_caught") {
      ledger.conflict_caught = count();
      has_ledger = true;
    } else if (kv.key == "ledger.conflicts_overlap_thresholds") {
      ledger.conflicts_overlap_thresholds = parse_bool(kv.value, kv.line);
    } else if (kv.key.rfind("ledger.threshold.", 0) == 0) {
      const StageId stage = parse_stage_or_throw(kv.key.substr(17), kv.line);
      const auto v = split_numbers(kv.value, kv.line);
      if (v.size() != 2 || v[0] < 0 || v[1] < 0) {
        throw Error(ErrorCode::ConfigError, "threshold catch needs 'errors_caught,correct_flagged'", kv.line);
      }
      ledger.threshold_caught[stage] = {static_cast<std::uint64_t>(v[0]),
                                        static_cast<std::uint64_t>(v[1])};
      has_ledger = true;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown propagation key '" + kv.key + "'", kv.line);
    }
  }
  for (const char* key : {"j_usage", "j_tear", "j_profile", "j_concave", "j_convex"}) {
    if (!seen[key]) throw Error(ErrorCode::ConfigError, std::string("missing ") + key);
  }
  if (has_ledger) p.ledger = ledger;
  return p;
}

// Reads stage accuracies from an evaluate summary.json.
inline PropagationInput propagation_from_summary(const nlohmann::json& summary) {
  const auto acc = summary.find("stage_accuracies");
  if (acc == summary.end() || !acc->is_object()) {
    throw Error(ErrorCode::ConfigError, "summary has no stage_accuracies");
  }
  auto get = [&](StageId s) {
    const std::string name(to_string(s));
    auto it = acc->find(name);
    if (it == acc->end() || !it->is_number()) {
      throw Error(ErrorCode::ConfigError, "summary lacks the accuracy of stage " + name);
    }
    return it->get<double>();
  };
  PropagationInput p;
  p.accuracies = {get(StageId::Usage), get(StageId::Tear), get(StageId::Profile),
                  get(StageId::ConcaveSeverity), get(StageId::ConvexSeverity)};
  return p;
}

inline PropagationInput load_propagation_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const char first = static_cast<char>(in >> std::ws, in.peek());
  if (first == '{') {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, e.what());
    }
    return propagation_from_summary(j);
  }
  return parse_propagation_record(in);
}

inline Json propagation_json(const PropagationInput& p, int d) {
  validate(p.accuracies);
  const auto& a = p.accuracies;
  Json j;
  j["accuracies"] = {{"j_usage", a.j_usage}, {"j_tear", a.j_tear}, {"j_profile", a.j_profile},
                     {"j_concave", a.j_concave}, {"j_convex", a.j_convex}};
  j["paths"] = {{"rectangular", report::round_to(path_accuracy(a, FlapProfile::Rectangular), d)},
                {"concave", report::round_to(path_accuracy(a, FlapProfile::Concave), d)},
                {"convex", report::round_to(path_accuracy(a, FlapProfile::Convex), d)}};
  const auto interval = accuracy_interval(a);
  j["interval"] = {{"min", report::round_to(interval.min, d)}, {"max", report::round_to(interval.max, d)}};
  if (p.mix) {
    j["mix"] = *p.mix;
    j["mixed_accuracy"] = report::round_to(mixed_path_accuracy(a, *p.mix), d);
  }
  if (p.ledger) {
    const auto bounds = corrected_accuracy(*p.ledger);
    const auto& l = *p.ledger;
    Json lj;
    lj["total_runs"] = l.total_runs;
    lj["total_errors"] = l.total_errors;
    lj["raw_accuracy"] = report::round_to(
        static_cast<double>(l.total_runs - l.total_errors) / static_cast<double>(l.total_runs), d);
    Json caught = Json::object();
    for (const auto& [stage, c] : l.threshold_caught) {
      caught[std::string(to_string(stage))] = {{"errors_caught", c.errors_caught},
                                               {"correct_flagged", c.correct_flagged}};
    }
    lj["threshold_caught"] = caught;
    lj["conflict_caught"] = l.conflict_caught;
    lj["conflicts_overlap_thresholds"] = l.conflicts_overlap_thresholds;
    j["ledger"] = lj;
    j["corrected"] = {{"low", report::round_to(bounds.low, d)}, {"high", report::round_to(bounds.high, d)}};
  }
  return j;
}

inline std::string propagation_text(const Json& j, int d) {
  std::ostringstream t;
  t << "path accuracy  rectangular " << report::fixed(j["paths"]["rectangular"].get<double>(), d)
    << "  concave " << report::fixed(j["paths"]["concave"].get<double>(), d) << "  convex "
    << report::fixed(j["paths"]["convex"].get<double>(), d) << '\n';
  t << "interval       [" << report::fixed(j["interval"]["min"].get<double>(), d) << ", "
    << report::fixed(j["interval"]["max"].get<double>(), d) << "]\n";
  if (j.contains("mixed_accuracy")) {
    t << "mix-weighted   " << report::fixed(j["mixed_accuracy"].get<double>(), d) << '\n';
  }
  if (j.contains("corrected")) {
    t << "corrected      [" << report::fixed(j["corrected"]["low"].get<double>(), d) << ", "
      << report::fixed(j["corrected"]["high"].get<double>(), d) << "]\n";
  }
  return t.str();
}

inline int cmd_propagate(const std::filesystem::path& input, const CliConfig& cfg,
                         std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(input.string(), err, [&] {
    const PropagationInput p = load_propagation_input(input);
    const Json j = propagation_json(p, cfg.rounding);
    ReportWriter writer(cfg.report_dir, "propagate");
    Json rec = j;
    rec["command"] = "propagate";
    writer.write_json("propagation.json", rec);
    const std::string text = propagation_text(j, cfg.rounding);
    writer.write("propagation.txt", text);
    writer.finish();
    out << text;
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// simulate

enum class SimulationMode { Synthetic, Oracle };

struct SimulateOptions {
  SimulationMode mode = SimulationMode::Synthetic;
  // Synthetic: JSONL wheel specs; oracle: JSON oracle config. Empty uses the
  // built-in defaults.
  std::filesystem::path input;
  std::uint64_t n = 0;
  double noise = 0.0;
  bool per_branch = false;
  std::filesystem::path export_path;
};

inline synth::WheelSpec spec_from_json(const nlohmann::json& j, std::size_t line) {
  try {
    synth::WheelSpec s;
    auto req = [&](const char* key) -> const nlohmann::json& {
      if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing '") + key + "'", line);
      return j.at(key);
    };
    auto usage = parse_usage(req("usage").get<std::string>());
    auto profile = parse_profile(req("profile").get<std::string>());
    if (!usage || !profile) throw Error(ErrorCode::ParseError, "unknown usage or profile", line);
    s.usage = *usage;
    s.profile = *profile;
    if (j.contains("severity") && !j["severity"].is_null()) {
      auto sev = parse_severity(j["severity"].get<std::string>());
      if (!sev) throw Error(ErrorCode::ParseError, "unknown severity", line);
      s.severity = *sev;
    }
    s.n_flaps = j.value("n_flaps", 24);
    for (int f : j.value("torn_flaps", std::vector<int>{})) s.torn_flaps.insert(f);
    s.profile_depth = j.value("profile_depth", needs_severity(s.profile) ? 0.2 : 0.0);
    s.noise_sigma = j.value("noise_sigma", 0.0);
    s.fringe = j.value("fringe", s.usage == UsageState::New);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what(), line);
  }
}

inline std::vector<synth::WheelSpec> load_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<synth::WheelSpec> specs;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, e.what(), line);
    }
    specs.push_back(spec_from_json(j, line));
    try {
      synth::validate(specs.back());
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidSpec, e.what(), line);
    }
  }
  return specs;
}

// {"matrices": {"usage": [[..],[..]], ...}, "confidence_law": [mc, mf, spread],
//  "calibration": "accuracy"|"per_class", "mix": [r, cc, cv]}
// Missing parts fall back to the reference matrices and defaults.
inline sim::OracleConfig oracle_config_from_json(const nlohmann::json& j) {
  sim::OracleConfig c;
  c.matrices = sim::reference_matrices();
  try {
    if (j.contains("matrices")) {
      for (const auto& [name, rows] : j["matrices"].items()) {
        const StageId s = parse_stage_or_throw(name);
        c.matrices.insert_or_assign(s, ConfusionMatrix(s, rows.get<std::vector<std::vector<std::uint64_t>>>()));
      }
    }
    if (j.contains("confidence_law")) {
      const auto v = j["confidence_law"].get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::ConfigError, "confidence_law needs three numbers");
      c.law = {v[0], v[1], v[2]};
    }
    if (j.contains("calibration")) {
      const auto cal = j["calibration"].get<std::string>();
      if (cal == "accuracy") c.calibration = sim::RowCalibration::Accuracy;
      else if (cal == "per_class") c.calibration = sim::RowCalibration::PerClass;
      else throw Error(ErrorCode::ConfigError, "unknown calibration '" + cal + "'");
    }
    if (j.contains("mix")) {
      const auto v = j["mix"].get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::ConfigError, "mix needs three fractions");
      c.mix = {v[0], v[1], v[2]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("oracle config: ") + e.what());
  }
  return c;
}

inline Json tally_json(const sim::HierarchyTally& t, int d) {
  return {{"runs", t.runs}, {"correct", t.correct}, {"conflicted", t.conflicted},
          {"accuracy", report::round_to(t.accuracy(), d)}};
}

inline Json simulation_json(const sim::SimulationReport& rep, const StageAccuracies& predicted_from,
                            const BranchMix& mix, int d) {
  Json j;
  j["overall"] = tally_json(rep.overall, d);
  Json branches = Json::object();
  Json predicted = Json::object();
  for (FlapProfile b : {FlapProfile::Rectangular, FlapProfile::Concave, FlapProfile::Convex}) {
    const auto& t = rep.per_branch[sim::branch_index(b)];
    if (t.runs) branches[std::string(to_string(b))] = tally_json(t, d);
    predicted[std::string(to_string(b))] = report::round_to(path_accuracy(predicted_from, b), d);
  }
  j["per_branch"] = branches;
  Json stages = Json::object();
  for (const auto& [stage, t] : rep.stages) {
    stages[std::string(to_string(stage))] = {{"decided", t.decided}, {"correct", t.correct},
                                             {"accuracy", report::round_to(t.accuracy(), d)}};
  }
  j["stages"] = stages;
  j["predicted_paths"] = predicted;
  j["predicted_mixed"] = report::round_to(mixed_path_accuracy(predicted_from, mix), d);
  j["usage_threshold"] = {{"errors_flagged", rep.errors_flagged_usage},
                          {"correct_flagged", rep.correct_flagged_usage}};
  if (rep.ledger.total_runs) {
    const auto b = corrected_accuracy(rep.ledger);
    j["corrected"] = {{"low", report::round_to(b.low, d)}, {"high", report::round_to(b.high, d)}};
  }
  return j;
}

inline int cmd_simulate(const SimulateOptions& opt, const CliConfig& cfg,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded("simulate", err, [&] {
    if (opt.n == 0) throw Error(ErrorCode::ConfigError, "n must be >= 1");
    validate_config(cfg.engine);
    const int d = cfg.rounding;
    Json rec;
    rec["command"] = "simulate";
    rec["config"] = config_json(cfg);
    rec["n"] = opt.n;
    std::vector<LabeledSample> exported;

    if (opt.mode == SimulationMode::Synthetic) {
      std::vector<synth::WheelSpec> specs;
      std::uint64_t seeds = 1;
      if (opt.input.empty()) {
        specs = sim::random_specs(opt.n, cfg.seed, opt.noise);
      } else {
        specs = load_specs(opt.input);
        if (specs.empty()) throw Error(ErrorCode::InvalidSpec, "spec batch is empty");
        seeds = opt.n;
      }
      const auto rep = sim::simulate_synthetic(specs, seeds, cfg.seed, cfg.engine);
      // Stage accuracies measured in this run feed the path model.
      auto measured = [&](StageId s) {
        auto it = rep.stages.find(s);
        return it == rep.stages.end() || it->second.decided == 0 ? 1.0 : it->second.accuracy();
      };
      const StageAccuracies acc{measured(StageId::Usage), measured(StageId::Tear),
                                measured(StageId::Profile), measured(StageId::ConcaveSeverity),
                                measured(StageId::ConvexSeverity)};
      rec["mode"] = "synthetic";
      rec["specs"] = specs.size();
      rec["seeds_per_spec"] = seeds;
      rec["noise_sigma"] = opt.noise;
      rec["result"] = simulation_json(rep, acc, {1.0 / 3, 1.0 / 3, 1.0 / 3}, d);
      if (!opt.export_path.empty()) exported = sim::export_synthetic_samples(specs, cfg.seed);
    } else {
      sim::OracleConfig oc;
      oc.matrices = sim::reference_matrices();
      if (!opt.input.empty()) {
        std::ifstream in(opt.input);
        if (!in) throw Error(ErrorCode::IoError, "cannot open " + opt.input.string());
        nlohmann::json j;
        try {
          in >> j;
        } catch (const nlohmann::json::parse_error& e) {
          throw Error(ErrorCode::ParseError, e.what());
        }
        oc = oracle_config_from_json(j);
      }
      const StageAccuracies acc = sim::accuracies_of(oc.matrices);
      rec["mode"] = "oracle";
      rec["calibration"] = oc.calibration == sim::RowCalibration::Accuracy ? "accuracy" : "per_class";
      rec["confidence_law"] = {oc.law.mean_correct, oc.law.mean_false, oc.law.spread};
      rec["mix"] = oc.mix;
      if (opt.per_branch) {
        Json branches = Json::object();
        for (FlapProfile b : {FlapProfile::Rectangular, FlapProfile::Concave, FlapProfile::Convex}) {
          sim::OracleConfig one = oc;
          one.mix = {0.0, 0.0, 0.0};
          one.mix[sim::branch_index(b)] = 1.0;
          const auto rep = sim::simulate_oracle(one, opt.n, derive_seed(cfg.seed, sim::branch_index(b)),
                                                cfg.engine);
          branches[std::string(to_string(b))] = simulation_json(rep, acc, one.mix, d);
        }
        rec["per_branch_runs"] = branches;
      } else {
        const auto rep = sim::simulate_oracle(oc, opt.n, cfg.seed, cfg.engine);
        rec["result"] = simulation_json(rep, acc, oc.mix, d);
      }
      if (!opt.export_path.empty()) exported = sim::export_oracle_samples(oc, opt.n, cfg.seed);
    }

    ReportWriter writer(cfg.report_dir, "simulate");
    writer.write_json("simulation.json", rec);
    std::ostringstream text;
    auto describe_result = [&](const std::string& label, const Json& r) {
      text << label << ": hierarchy accuracy "
           << report::fixed(r["overall"]["accuracy"].get<double>(), d) << " over "
           << r["overall"]["runs"].get<std::uint64_t>() << " runs (predicted, mix-weighted: "
           << report::fixed(r["predicted_mixed"].get<double>(), d) << ")\n";
      for (const auto& [b, t] : r["per_branch"].items()) {
        text << "  " << b << ": measured " << report::fixed(t["accuracy"].get<double>(), d)
             << ", predicted " << report::fixed(r["predicted_paths"][b].get<double>(), d) << '\n';
      }
    };
    if (rec.contains("result")) describe_result(rec["mode"].get<std::string>(), rec["result"]);
    if (rec.contains("per_branch_runs")) {
      for (const auto& [b, r] : rec["per_branch_runs"].items()) describe_result(b, r);
    }
    writer.write("simulation.txt", text.str());
    if (!opt.export_path.empty()) write_prediction_file(opt.export_path, exported);
    writer.finish();
    out << text.str();
    return static_cast<int>(kExitOk);
  });
}

}  // namespace flapwear::cli
