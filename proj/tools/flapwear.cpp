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

// flapwear: classify, evaluate, simulate and propagate flap-wheel wear
// predictions from the command line.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flapwear/cli.hpp"

namespace {

using flapwear::cli::CliConfig;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> thresholds;
  bool no_thresholds = false;
  std::optional<int> rounding;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--out", out, "report directory");
    app->add_option("--thresholds", thresholds, "stage=value confidence threshold (or stage=none)")
        ->take_all();
    app->add_flag("--no-thresholds", no_thresholds, "disable all confidence thresholds");
    app->add_option("--rounding", rounding, "decimals in reports")->check(CLI::Range(1, 12));
  }

  // Command-line flags override the config file.
  CliConfig resolve() const {
    CliConfig cfg;
    if (!config_path.empty()) cfg = flapwear::cli::load_config(config_path, cfg);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.report_dir = out;
    if (rounding) cfg.rounding = *rounding;
    if (no_thresholds) cfg.engine.thresholds.clear();
    for (const auto& t : thresholds) flapwear::cli::apply_threshold(cfg.engine, t);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical wear-state classification of abrasive flap wheels"};
  app.require_subcommand(1);

  CommonFlags classify_flags, evaluate_flags, simulate_flags, propagate_flags;
  std::string classify_input, evaluate_input, propagate_input;

  auto* classify = app.add_subcommand("classify", "run the decision hierarchy on prediction files");
  classify->add_option("predictions", classify_input, "JSONL prediction file")->required();
  classify_flags.attach(classify);

  auto* evaluate = app.add_subcommand("evaluate", "per-stage metrics from labeled predictions");
  evaluate->add_option("labeled", evaluate_input, "JSONL prediction file with truth labels")->required();
  evaluate_flags.attach(evaluate);

  flapwear::cli::SimulateOptions sim_opt;
  std::string sim_mode = "synth", sim_input, sim_export;
  auto* simulate = app.add_subcommand("simulate", "closed-loop synthetic or oracle simulation");
  simulate->add_option("mode", sim_mode, "synth or oracle")
      ->check(CLI::IsMember({"synth", "oracle"}));
  simulate->add_option("input", sim_input, "wheel-spec JSONL (synth) or oracle JSON (oracle)");
  simulate->add_option("-n,--runs", sim_opt.n, "runs (oracle), specs, or seeds per spec")->required();
  simulate->add_option("--noise", sim_opt.noise, "noise sigma for generated specs");
  simulate->add_flag("--per-branch", sim_opt.per_branch, "oracle: one simulation per profile branch");
  simulate->add_option("--export", sim_export, "write labeled prediction records to this file");
  simulate_flags.attach(simulate);

  auto* propagate = app.add_subcommand("propagate", "error propagation from stage accuracies");
  propagate->add_option("input", propagate_input, "key = value record or evaluate summary.json")
      ->required();
  propagate_flags.attach(propagate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : flapwear::cli::kExitConfig;
  }

  CliConfig cfg;
  CommonFlags* flags = classify->parsed()   ? &classify_flags
                       : evaluate->parsed() ? &evaluate_flags
                       : simulate->parsed() ? &simulate_flags
                                            : &propagate_flags;
  try {
    cfg = flags->resolve();
  } catch (const flapwear::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return flapwear::cli::kExitConfig;
  }

  if (classify->parsed()) return flapwear::cli::cmd_classify(classify_input, cfg);
  if (evaluate->parsed()) return flapwear::cli::cmd_evaluate(evaluate_input, cfg);
  if (simulate->parsed()) {
    sim_opt.mode = sim_mode == "oracle" ? flapwear::cli::SimulationMode::Oracle
                                        : flapwear::cli::SimulationMode::Synthetic;
    sim_opt.input = sim_input;
    sim_opt.export_path = sim_export;
    return flapwear::cli::cmd_simulate(sim_opt, cfg);
  }
  return flapwear::cli::cmd_propagate(propagate_input, cfg);
}
