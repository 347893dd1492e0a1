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

// Run manifests and the command implementations behind the dynfuse tool.
//
// A manifest is one JSON file:
//
//   {
//     "techniques": [
//       {"name": "A", "similarity": "A.f32"},
//       {"name": "B", "query": "q.csv", "database": "db.csv", "metric": "cosine"}
//     ],
//     "ground_truth": "ground_truth.json",
//     "config": {"r_window": 2, "frame_separation": 1, ...},
//     "strategies": ["dyn-mpf", "full-mpf"],
//     "strategy_params": {"hier-mpf": {"tiers": [["A"], ["B"]]},
//                         "static-subset": {"subset": ["A", "B"]}},
//     "recall_k": [1, 5, 10],
//     "histogram_bins": 10,
//     "f_values": [1, 5, 10, 25, 50],
//     "output_dir": "results",
//     "workers": 0
//   }
//
// Relative paths resolve against the manifest's directory. Command-line
// flags override manifest fields.

#ifndef DYNFUSE_RUN_HPP
#define DYNFUSE_RUN_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynfuse/core.hpp"
#include "dynfuse/engine.hpp"
#include "dynfuse/error.hpp"
#include "dynfuse/eval.hpp"
#include "dynfuse/ingest.hpp"
#include "dynfuse/log.hpp"
#include "dynfuse/parallel.hpp"
#include "dynfuse/synth.hpp"

namespace dynfuse::cli {

namespace fs = std::filesystem;

struct TechniqueSource {
  std::string name;
  fs::path similarity;  // either this ...
  fs::path query;       // ... or a descriptor pair
  fs::path database;
  std::string metric = "cosine";
};

struct RunManifest {
  fs::path base_dir;
  std::vector<TechniqueSource> techniques;
  fs::path ground_truth;
  FusionConfig config;
  std::vector<Strategy> strategies = {Strategy::kDynMpf};
  nlohmann::json strategy_params = nlohmann::json::object();
  std::vector<std::size_t> recall_k = {1, 5, 10};
  std::size_t histogram_bins = 10;
  std::vector<std::size_t> f_values = {1, 5, 10, 25, 50};
  fs::path output_dir = "results";
  std::size_t workers = 0;  // 0 = available parallelism
};

struct Overrides {
  std::optional<fs::path> out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> strategies;
  std::optional<std::size_t> r_window;
  std::optional<std::size_t> frame_separation;
  std::vector<std::size_t> recall_k;
  std::vector<std::size_t> f_values;
};

namespace detail {

inline Error config_error(const std::string& field, const std::string& message) {
  return Error(ErrorCode::kConfigError, field + ": " + message, field);
}

inline fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

inline void require_exists(const fs::path& p, const std::string& field) {
  if (!fs::exists(p)) throw config_error(field, "path does not exist: " + p.string());
}

inline Strategy strategy_from(const std::string& s, const std::string& field) {
  const auto parsed = parse_strategy(s);
  if (!parsed) throw config_error(field, "unknown strategy '" + s + "'");
  return *parsed;
}

inline TieBreak tie_break_from(const std::string& s) {
  for (TieBreak t : {TieBreak::kLowestIndex, TieBreak::kSmallestSubsetThenLexicographic}) {
    if (to_string(t) == s) return t;
  }
  throw config_error("config.tie_break", "unknown tie-break rule '" + s + "'");
}

inline Weighting weighting_from(const std::string& s) {
  for (Weighting w : {Weighting::kRatio, Weighting::kUniform}) {
    if (to_string(w) == s) return w;
  }
  throw config_error("config.weighting", "unknown weighting '" + s + "'");
}

inline FusionConfig config_from_json(const nlohmann::json& j) {
  FusionConfig c;
  c.r_window = j.value("r_window", c.r_window);
  c.frame_separation = j.value("frame_separation", c.frame_separation);
  c.min_subset_size = j.value("min_subset_size", c.min_subset_size);
  if (j.contains("max_subset_size") && !j["max_subset_size"].is_null()) {
    c.max_subset_size = j["max_subset_size"].get<std::size_t>();
  }
  c.epsilon = j.value("epsilon", c.epsilon);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (j.contains("tie_break")) c.tie_break = tie_break_from(j["tie_break"].get<std::string>());
  if (j.contains("weighting")) c.weighting = weighting_from(j["weighting"].get<std::string>());
  return c;
}

inline Matrix load_any(const fs::path& p, MatrixRole role, const std::string& technique) {
  if (p.extension() == ".csv") return load_csv(p, role, technique);
  Matrix m = load_matrix(p);
  if (m.meta.role != role) {
    throw Error(ErrorCode::kShapeMismatch,
                p.string() + " has role " + std::string(to_string(m.meta.role)) + ", expected " +
                    std::string(to_string(role)),
                p.string());
  }
  return m;
}

inline nlohmann::json error_json(const Error& e) {
  return {{"error",
           {{"code", std::string(to_string(e.code()))},
            {"message", e.what()},
            {"subject", e.subject()}}}};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Parses a manifest and checks that every referenced path exists.
inline RunManifest parse_manifest(const nlohmann::json& j, const fs::path& base_dir) {
  using detail::config_error;
  RunManifest m;
  m.base_dir = base_dir;
  try {
    if (!j.is_object()) throw config_error("manifest", "must be a JSON object");
    if (!j.contains("techniques") || !j["techniques"].is_array() || j["techniques"].empty()) {
      throw config_error("techniques", "at least one technique is required");
    }
    for (std::size_t i = 0; i < j["techniques"].size(); ++i) {
      const auto& t = j["techniques"][i];
      const std::string field = "techniques[" + std::to_string(i) + "]";
      TechniqueSource src;
      if (!t.contains("name")) throw config_error(field + ".name", "missing");
      src.name = t["name"].get<std::string>();
      if (t.contains("similarity")) {
        src.similarity = detail::resolve(base_dir, t["similarity"].get<std::string>());
        detail::require_exists(src.similarity, field + ".similarity");
      } else if (t.contains("query") && t.contains("database")) {
        src.query = detail::resolve(base_dir, t["query"].get<std::string>());
        src.database = detail::resolve(base_dir, t["database"].get<std::string>());
        detail::require_exists(src.query, field + ".query");
        detail::require_exists(src.database, field + ".database");
        src.metric = t.value("metric", src.metric);
        if (!parse_metric(src.metric)) {
          throw config_error(field + ".metric", "unknown metric '" + src.metric + "'");
        }
      } else {
        throw config_error(field, "needs 'similarity' or both 'query' and 'database'");
      }
      m.techniques.push_back(std::move(src));
    }
    if (!j.contains("ground_truth")) throw config_error("ground_truth", "missing");
    m.ground_truth = detail::resolve(base_dir, j["ground_truth"].get<std::string>());
    detail::require_exists(m.ground_truth, "ground_truth");
    if (j.contains("config")) m.config = detail::config_from_json(j["config"]);
    if (j.contains("strategies")) {
      m.strategies.clear();
      for (const auto& s : j["strategies"]) {
        m.strategies.push_back(detail::strategy_from(s.get<std::string>(), "strategies"));
      }
    }
    m.strategy_params = j.value("strategy_params", nlohmann::json::object());
    m.recall_k = j.value("recall_k", m.recall_k);
    m.histogram_bins = j.value("histogram_bins", m.histogram_bins);
    m.f_values = j.value("f_values", m.f_values);
    m.output_dir = detail::resolve(base_dir, j.value("output_dir", std::string("results")));
    m.workers = j.value("workers", m.workers);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("manifest", std::string("malformed field: ") + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kConfigError, "--config: path does not exist: " + path.string(),
                "config");
  }
  return parse_manifest(dynfuse::detail::read_json_file(path), path.parent_path());
}

inline void apply_overrides(RunManifest& m, const Overrides& o) {
  if (o.out) m.output_dir = *o.out;
  if (o.workers) m.workers = *o.workers;
  if (o.seed) m.config.rng_seed = *o.seed;
  if (!o.strategies.empty()) {
    m.strategies.clear();
    for (const auto& s : o.strategies) m.strategies.push_back(detail::strategy_from(s, "--strategy"));
  }
  if (o.r_window) m.config.r_window = *o.r_window;
  if (o.frame_separation) m.config.frame_separation = *o.frame_separation;
  if (!o.recall_k.empty()) m.recall_k = o.recall_k;
  if (!o.f_values.empty()) m.f_values = o.f_values;
}

/// Everything needed to reproduce the run, with paths made absolute.
inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json techniques = nlohmann::json::array();
  for (const auto& t : m.techniques) {
    nlohmann::json e = {{"name", t.name}};
    if (!t.similarity.empty()) {
      e["similarity"] = fs::absolute(t.similarity).lexically_normal().string();
    } else {
      e["query"] = fs::absolute(t.query).lexically_normal().string();
      e["database"] = fs::absolute(t.database).lexically_normal().string();
      e["metric"] = t.metric;
    }
    techniques.push_back(e);
  }
  nlohmann::json strategies = nlohmann::json::array();
  for (Strategy s : m.strategies) strategies.push_back(std::string(to_string(s)));
  return {{"techniques", techniques},
          {"ground_truth", fs::absolute(m.ground_truth).lexically_normal().string()},
          {"config", config_to_json(m.config)},
          {"strategies", strategies},
          {"strategy_params", m.strategy_params},
          {"recall_k", m.recall_k},
          {"histogram_bins", m.histogram_bins},
          {"f_values", m.f_values},
          {"output_dir", fs::absolute(m.output_dir).lexically_normal().string()},
          {"workers", m.workers}};
}

struct LoadedInputs {
  SimilarityTensor tensor;
  GroundTruth ground_truth;
};

inline LoadedInputs load_inputs(const RunManifest& m) {
  const std::size_t workers = m.workers == 0 ? default_workers() : m.workers;
  std::vector<Matrix> matrices;
  std::vector<std::string> names;
  for (const auto& t : m.techniques) {
    if (!t.similarity.empty()) {
      matrices.push_back(detail::load_any(t.similarity, MatrixRole::kSimilarity, t.name));
    } else {
      const Matrix q = detail::load_any(t.query, MatrixRole::kQuery, t.name);
      const Matrix db = detail::load_any(t.database, MatrixRole::kDatabase, t.name);
      matrices.push_back(compute_similarity(q, db, *parse_metric(t.metric), workers));
    }
    names.push_back(t.name);
  }
  LoadedInputs in{assemble_tensor(matrices, names), load_ground_truth(m.ground_truth)};
  in.ground_truth.validate(in.tensor.queries(), in.tensor.database_size());
  return in;
}

namespace detail {

inline Subset subset_from_names(const SimilarityTensor& t, const nlohmann::json& names,
                                const std::string& field) {
  if (!names.is_array()) throw config_error(field, "must be an array of technique names");
  Subset s;
  for (const auto& n : names) {
    const auto idx = t.index_of(n.get<std::string>());
    if (!idx) throw config_error(field, "unknown technique '" + n.get<std::string>() + "'");
    s.push_back(*idx);
  }
  std::sort(s.begin(), s.end());
  return s;
}

inline StrategyResult run_strategy(Strategy s, const RunManifest& m, const LoadedInputs& in,
                                   const EngineOptions& options) {
  const auto& t = in.tensor;
  const std::string key(to_string(s));
  const nlohmann::json params = m.strategy_params.value(key, nlohmann::json::object());
  const std::string field = "strategy_params." + key;
  switch (s) {
    case Strategy::kDynMpf: return run_dyn_mpf(t, m.config, options);
    case Strategy::kFullMpf: return run_full_mpf(t, m.config, options);
    case Strategy::kRandomPair: return run_random_pair(t, m.config, options);
    case Strategy::kHierMpf: {
      HierParams hp;
      if (params.contains("tiers")) {
        for (const auto& tier : params["tiers"]) {
          hp.tiers.push_back(subset_from_names(t, tier, field + ".tiers"));
        }
      }
      if (params.contains("shortlist_fractions")) {
        hp.shortlist_fractions = params["shortlist_fractions"].get<std::vector<double>>();
      }
      return run_hier_mpf(t, m.config, hp, options);
    }
    case Strategy::kStaticSubset: {
      if (params.contains("subset")) {
        return run_static_subset(t, m.config, subset_from_names(t, params["subset"], field),
                                 options);
      }
      if (params.contains("oracle_size")) {
        const auto choice =
            oracle_best_static_subset(t, in.ground_truth, params["oracle_size"].get<std::size_t>());
        StrategyResult r = run_static_subset(t, m.config, choice.subset, options);
        r.params["oracle_size"] = params["oracle_size"];
        r.params["oracle_recall_at_1"] = choice.recall;
        return r;
      }
      throw config_error(field, "needs 'subset' or 'oracle_size'");
    }
    case Strategy::kBestSingleOracle:
      return run_best_single_oracle(t, in.ground_truth, m.config, options);
  }
  throw config_error("strategies", "unsupported strategy");
}

inline EngineOptions engine_options(const RunManifest& m) {
  EngineOptions o;
  o.workers = m.workers;
  o.ranking_depth = std::max<std::size_t>(
      1, m.recall_k.empty() ? 1 : *std::max_element(m.recall_k.begin(), m.recall_k.end()));
  return o;
}

inline void validate_run(const RunManifest& m, const LoadedInputs& in) {
  m.config.validate(in.tensor.techniques(), in.tensor.database_size());
  if (m.recall_k.empty()) throw config_error("recall_k", "at least one K is required");
  for (std::size_t k : m.recall_k) {
    if (k == 0) throw config_error("recall_k", "K must be positive");
  }
  if (m.histogram_bins == 0) throw config_error("histogram_bins", "must be positive");
  if (m.strategies.empty()) throw config_error("strategies", "no strategy requested");
}

}  // namespace detail

/// Runs every requested strategy and writes its result, recall and
/// histogram files plus summary.json into the output directory.
inline nlohmann::json cmd_run(const RunManifest& m) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedInputs in = load_inputs(m);
  detail::validate_run(m, in);
  const EngineOptions options = detail::engine_options(m);
  fs::create_directories(m.output_dir);

  nlohmann::json per_strategy = nlohmann::json::array();
  std::string combined = "strategy,K,recall\n";
  for (Strategy s : m.strategies) {
    const auto ts = std::chrono::steady_clock::now();
    const std::string name(to_string(s));
    log().info("running {}", name);
    const StrategyResult result = detail::run_strategy(s, m, in, options);
    const double run_seconds = detail::seconds_since(ts);
    const RecallReport recall = recall_at_k(result, in.ground_truth, m.recall_k);
    const AliasingHistogram hist = aliasing_histogram(result, in.ground_truth, m.histogram_bins);

    const fs::path dir = m.output_dir;
    dynfuse::detail::write_text_file(dir / ("result_" + name + ".json"),
                                     result_to_json(result).dump(2) + "\n");
    dynfuse::detail::write_text_file(dir / ("recall_" + name + ".json"),
                                     recall_to_json(recall).dump(2) + "\n");
    const std::string csv = recall_to_csv(recall);
    dynfuse::detail::write_text_file(dir / ("recall_" + name + ".csv"), csv);
    combined += csv.substr(csv.find('\n') + 1);
    dynfuse::detail::write_text_file(dir / ("histogram_" + name + ".csv"), histogram_to_csv(hist));
    dynfuse::detail::write_text_file(dir / ("histogram_" + name + ".json"),
                                     histogram_to_json(hist).dump(2) + "\n");

    nlohmann::json recall_at = nlohmann::json::object();
    for (const auto& [k, v] : recall.recall_at) recall_at[std::to_string(k)] = v;
    per_strategy.push_back({{"strategy", name},
                            {"params", result.params},
                            {"recall_at", recall_at},
                            {"valid_count", recall.valid_count},
                            {"records", result.records.size()},
                            {"mean_ratio_correct", histogram_to_json(hist)["mean_ratio_correct"]},
                            {"mean_ratio_incorrect", histogram_to_json(hist)["mean_ratio_incorrect"]},
                            {"wall_seconds", run_seconds}});
  }
  dynfuse::detail::write_text_file(m.output_dir / "recall.csv", combined);
  nlohmann::json summary = {{"command", "run"},
                            {"manifest", manifest_to_json(m)},
                            {"workers_used", m.workers == 0 ? default_workers() : m.workers},
                            {"techniques", in.tensor.names()},
                            {"queries", in.tensor.queries()},
                            {"database_size", in.tensor.database_size()},
                            {"strategies", per_strategy},
                            {"wall_seconds", detail::seconds_since(t0)}};
  dynfuse::detail::write_text_file(m.output_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

/// Dynamic fusion Recall@1 for each calibration period in m.f_values.
inline nlohmann::json cmd_sweep(const RunManifest& m) {
  const auto t0 = std::chrono::steady_clock::now();
  if (m.f_values.empty()) throw detail::config_error("f_values", "at least one F is required");
  for (std::size_t f : m.f_values) {
    if (f == 0) throw detail::config_error("f_values", "F must be positive");
  }
  const LoadedInputs in = load_inputs(m);
  detail::validate_run(m, in);
  const auto sweep = frame_separation_sweep(in.tensor, in.ground_truth, m.config, m.f_values,
                                            detail::engine_options(m));
  fs::create_directories(m.output_dir);
  dynfuse::detail::write_text_file(m.output_dir / "sweep.csv", sweep_to_csv(sweep));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [f, r] : sweep) {
    rows.push_back({{"F", f}, {"recall_at_1", r.recall_at.at(1)}, {"valid_count", r.valid_count}});
  }
  dynfuse::detail::write_text_file(m.output_dir / "sweep.json", rows.dump(2) + "\n");
  nlohmann::json summary = {{"command", "sweep"},
                            {"manifest", manifest_to_json(m)},
                            {"workers_used", m.workers == 0 ? default_workers() : m.workers},
                            {"sweep", rows},
                            {"wall_seconds", detail::seconds_since(t0)}};
  dynfuse::detail::write_text_file(m.output_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

inline SynthSpec preset(const std::string& name, std::uint64_t seed) {
  if (name == "disjoint-failure") return disjoint_failure_fixture(seed);
  if (name == "drifting") return drifting_fixture(seed);
  throw Error(ErrorCode::kConfigError, "--preset: unknown preset '" + name + "'", "preset");
}

/// Writes one similarity matrix per technique, ground_truth.json, the
/// effective spec and a ready-to-run manifest (run.json) into `out`.
inline nlohmann::json cmd_synth(const SynthSpec& spec, const fs::path& out) {
  const SynthData data = generate(spec);
  fs::create_directories(out);
  nlohmann::json techniques = nlohmann::json::array();
  for (std::size_t n = 0; n < data.tensor.techniques(); ++n) {
    const std::string file = data.tensor.name(n) + ".f32";
    write_matrix(out / file, tensor_technique_matrix(data.tensor, n));
    techniques.push_back({{"name", data.tensor.name(n)}, {"similarity", file}});
  }
  write_ground_truth(out / "ground_truth.json", data.ground_truth);
  dynfuse::detail::write_text_file(out / "synth_spec.json", spec_to_json(spec).dump(2) + "\n");
  FusionConfig config;
  config.r_window = spec.r_window;
  config.rng_seed = spec.seed;
  nlohmann::json manifest = {{"techniques", techniques},
                             {"ground_truth", "ground_truth.json"},
                             {"config", config_to_json(config)},
                             {"strategies", {"dyn-mpf", "full-mpf", "best-single-oracle"}},
                             {"recall_k", {1, 5, 10}},
                             {"output_dir", "results"}};
  dynfuse::detail::write_text_file(out / "run.json", manifest.dump(2) + "\n");
  return {{"command", "synth"},
          {"out", fs::absolute(out).lexically_normal().string()},
          {"techniques", data.tensor.names()},
          {"queries", data.tensor.queries()},
          {"database_size", data.tensor.database_size()}};
}

/// Validates matrix/sidecar pairs (or CSV files). Each entry reports the
/// shape or the error code; `ok` is false if any file failed.
inline nlohmann::json cmd_ingest_check(const std::vector<fs::path>& paths) {
  nlohmann::json files = nlohmann::json::array();
  bool ok = true;
  for (fs::path p : paths) {
    if (p.string().ends_with(".meta.json")) {
      p = fs::path(p.string().substr(0, p.string().size() - 10) + ".f32");
    }
    nlohmann::json e = {{"path", p.string()}};
    try {
      const Matrix m = p.extension() == ".csv" ? load_csv(p, MatrixRole::kSimilarity, p.stem().string())
                                               : load_matrix(p);
      e["ok"] = true;
      e["rows"] = m.rows();
      e["cols"] = m.cols();
      e["role"] = std::string(to_string(m.meta.role));
      e["technique"] = m.meta.technique;
    } catch (const Error& err) {
      ok = false;
      e["ok"] = false;
      e["error"] = detail::error_json(err)["error"];
    }
    files.push_back(e);
  }
  return {{"command", "ingest-check"}, {"ok", ok}, {"files", files}};
}

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return 2;
    case ErrorCode::kIoError: return 3;
    default: return 1;
  }
}

/// Runs `fn`, printing its JSON report on success or an error object on
/// failure to `out`. Returns the process exit code.
template <typename Fn>
int guarded(std::ostream& out, Fn&& fn) {
  try {
    const nlohmann::json report = fn();
    out << report.dump(2) << "\n";
    if (report.contains("ok") && !report["ok"].get<bool>()) return 1;
    return 0;
  } catch (const Error& e) {
    out << detail::error_json(e).dump(2) << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    const Error wrapped(ErrorCode::kInvalidArgument, e.what());
    out << detail::error_json(wrapped).dump(2) << "\n";
    return 1;
  }
}

}  // namespace dynfuse::cli

#endif  // DYNFUSE_RUN_HPP
