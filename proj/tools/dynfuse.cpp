// Copyright 2026 The dynfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dynfuse/dynfuse.hpp"

namespace {

namespace fs = std::filesystem;
using dynfuse::cli::Overrides;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> strategies;
  std::optional<std::size_t> r_window;
  std::optional<std::size_t> frame_sep;
  std::vector<std::size_t> recall_k;
  std::vector<std::size_t> f_values;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run manifest (JSON)")->required();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--workers", f.workers, "Worker threads (0 = available parallelism)");
  cmd->add_option("--seed", f.seed, "RNG seed for randomized baselines");
  cmd->add_option("--strategy", f.strategies, "Strategy to run (repeatable)");
  cmd->add_option("--r-window", f.r_window, "Ratio-score exclusion half-width");
  cmd->add_option("--frame-sep", f.frame_sep, "Queries between calibrations");
  cmd->add_option("--recall-k", f.recall_k, "Comma-separated K values")->delimiter(',');
}

Overrides to_overrides(const Flags& f) {
  Overrides o;
  if (!f.out.empty()) o.out = fs::path(f.out);
  o.workers = f.workers;
  o.seed = f.seed;
  o.strategies = f.strategies;
  o.r_window = f.r_window;
  o.frame_separation = f.frame_sep;
  o.recall_k = f.recall_k;
  o.f_values = f.f_values;
  return o;
}

dynfuse::cli::RunManifest manifest_from(const Flags& f) {
  auto m = dynfuse::cli::load_manifest(f.config);
  dynfuse::cli::apply_overrides(m, to_overrides(f));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic multi-process fusion for visual place recognition"};
  app.require_subcommand(1);

  Flags run_flags;
  auto* run = app.add_subcommand("run", "Run strategies and evaluate recall");
  add_run_flags(run, run_flags);

  Flags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Recall@1 across calibration periods");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--f-values", sweep_flags.f_values, "Comma-separated periods")
      ->delimiter(',');

  std::string spec_path, preset, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ensemble");
  auto* spec_opt = synth->add_option("--spec", spec_path, "Generator spec (JSON)");
  synth->add_option("--preset", preset, "disjoint-failure or drifting")->excludes(spec_opt);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the spec seed");

  std::vector<std::string> check_paths;
  auto* check = app.add_subcommand("ingest-check", "Validate matrix and sidecar pairs");
  check->add_option("paths", check_paths, "Payload, sidecar or CSV files")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    return dynfuse::cli::guarded(std::cout,
                                 [&] { return dynfuse::cli::cmd_run(manifest_from(run_flags)); });
  }
  if (*sweep) {
    return dynfuse::cli::guarded(
        std::cout, [&] { return dynfuse::cli::cmd_sweep(manifest_from(sweep_flags)); });
  }
  if (*synth) {
    return dynfuse::cli::guarded(std::cout, [&] {
      if (spec_path.empty() && preset.empty()) {
        throw dynfuse::Error(dynfuse::ErrorCode::kConfigError, "--spec or --preset is required",
                             "spec");
      }
      dynfuse::SynthSpec spec;
      if (!spec_path.empty()) {
        if (!fs::exists(spec_path)) {
          throw dynfuse::Error(dynfuse::ErrorCode::kConfigError,
                               "--spec: path does not exist: " + spec_path, "spec");
        }
        spec = dynfuse::spec_from_json(dynfuse::detail::read_json_file(spec_path));
        if (synth_seed) spec.seed = *synth_seed;
      } else {
        spec = dynfuse::cli::preset(preset, synth_seed.value_or(42));
      }
      return dynfuse::cli::cmd_synth(spec, synth_out);
    });
  }
  std::vector<fs::path> paths(check_paths.begin(), check_paths.end());
  return dynfuse::cli::guarded(std::cout,
                               [&] { return dynfuse::cli::cmd_ingest_check(paths); });
}
