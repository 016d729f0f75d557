/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// fairfed run | report | gen-synth
//
// Log verbosity: FAIRFED_LOG=debug|info|warn|error|off (default warn).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairfed/fairfed.hpp"

namespace {

namespace fs = std::filesystem;

struct RunArgs {
  fs::path config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
  bool paired = false;
};

int cmd_run(const RunArgs& a) {
  fairfed::ExperimentConfig cfg = fairfed::parse_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.out) cfg.output_dir = *a.out;
  if (a.paired) {
    const auto p = fairfed::run_paired(cfg, cfg.output_dir, a.overwrite);
    std::cout << "wrote " << cfg.output_dir.string() << "/{private,nonprivate}"
              << " and " << fairfed::kComparisonName << '\n';
    return p.exit_status;
  }
  const std::string variant =
      cfg.training.privacy.enabled ? "private" : "nonprivate";
  const auto o =
      fairfed::run_experiment(cfg, cfg.output_dir, variant, a.overwrite);
  if (o.exit_status != 0) {
    std::cerr << "fairfed: training failed in round " << o.result.failed_round
              << ": " << o.result.error << '\n';
  } else {
    std::cout << "wrote " << cfg.output_dir.string() << '\n';
  }
  return o.exit_status;
}

int cmd_report(const std::vector<fs::path>& runs, const fs::path& out) {
  const auto rep = fairfed::emit_report(runs, out);
  for (const auto& w : rep.warnings) std::cerr << "fairfed: " << w << '\n';
  std::cout << "wrote report for " << runs.size() << " run(s), "
            << rep.common_rounds << " round(s), into " << out.string() << '\n';
  return 0;
}

int cmd_gen_synth(const fairfed::SyntheticSpec& spec,
                  const std::optional<fs::path>& out) {
  if (!out) {
    fairfed::generate_synthetic(std::cout, spec);
    return 0;
  }
  if (out->has_parent_path()) fs::create_directories(out->parent_path());
  std::ofstream os(*out, std::ios::binary);
  if (!os) throw fairfed::Error("cannot write '" + out->string() + "'");
  fairfed::generate_synthetic(os, spec);
  if (!os) throw fairfed::Error("write failed for '" + out->string() + "'");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated fairness-constrained training with local privacy"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "train from a JSON config");
  run_cmd->add_option("--config", run.config, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "output directory (overrides config)");
  run_cmd->add_option("--seed", run.seed, "seed (overrides config)");
  run_cmd->add_flag("--overwrite", run.overwrite,
                    "replace an existing run in the output directory");
  run_cmd->add_flag("--paired-privacy", run.paired,
                    "run with privacy on and off under one seed and compare");

  std::vector<fs::path> report_runs;
  fs::path report_out;
  auto* report_cmd =
      app.add_subcommand("report", "plot data and tables from finished runs");
  report_cmd->add_option("--runs", report_runs, "run directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "report directory")->required();

  fairfed::SyntheticSpec synth;
  std::optional<fs::path> synth_out;
  auto* synth_cmd =
      app.add_subcommand("gen-synth", "write a seeded two-group CSV dataset");
  synth_cmd->add_option("--rows", synth.rows, "number of rows")
      ->capture_default_str();
  synth_cmd->add_option("--bias", synth.bias, "group disparity in [0, 1]")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "output CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*report_cmd) return cmd_report(report_runs, report_out);
    if (*synth_cmd) return cmd_gen_synth(synth, synth_out);
  } catch (const std::exception& e) {
    std::cerr << "fairfed: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
