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

// Traverse-level strategies: dynamic fusion with periodic calibration and
// the comparison baselines (full fusion, random pair, hierarchical fusion,
// static subsets and ground-truth oracles).
//
// Every strategy returns one SelectionRecord per query, ordered by query.
// Queries are processed in parallel; a query that fails is recorded as
// invalid instead of aborting the run.

#ifndef DYNFUSE_ENGINE_HPP
#define DYNFUSE_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dynfuse/core.hpp"
#include "dynfuse/error.hpp"
#include "dynfuse/fusion.hpp"
#include "dynfuse/parallel.hpp"

namespace dynfuse {

enum class Strategy {
  kDynMpf,
  kFullMpf,
  kRandomPair,
  kHierMpf,
  kStaticSubset,
  kBestSingleOracle,
};

inline std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::kDynMpf: return "dyn-mpf";
    case Strategy::kFullMpf: return "full-mpf";
    case Strategy::kRandomPair: return "random-pair";
    case Strategy::kHierMpf: return "hier-mpf";
    case Strategy::kStaticSubset: return "static-subset";
    case Strategy::kBestSingleOracle: return "best-single-oracle";
  }
  return "unknown";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (Strategy k : {Strategy::kDynMpf, Strategy::kFullMpf, Strategy::kRandomPair,
                     Strategy::kHierMpf, Strategy::kStaticSubset,
                     Strategy::kBestSingleOracle}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct EngineOptions {
  std::size_t workers = 1;       // 0 = hardware concurrency
  std::size_t ranking_depth = 10;
};

struct StrategyResult {
  Strategy strategy = Strategy::kDynMpf;
  std::vector<std::string> technique_names;
  std::size_t database_size = 0;
  FusionConfig config;
  nlohmann::json params = nlohmann::json::object();
  std::vector<SelectionRecord> records;
};

struct HierParams {
  std::vector<std::vector<std::size_t>> tiers;  // empty: random split from the seed
  std::vector<double> shortlist_fractions = {0.1, 0.1};
};

namespace detail {

inline std::vector<NormalizedVector> normalize_all(const SimilarityTensor& t, std::size_t q) {
  std::vector<NormalizedVector> out;
  out.reserve(t.techniques());
  for (std::size_t n = 0; n < t.techniques(); ++n) out.push_back(minmax_normalize(t.slice(n, q)));
  return out;
}

inline std::vector<NormalizedVector> normalize_members(const SimilarityTensor& t,
                                                       std::size_t q, const Subset& members) {
  std::vector<NormalizedVector> out(t.techniques());
  for (std::size_t m : members) out[m] = minmax_normalize(t.slice(m, q));
  return out;
}

inline Subset all_techniques(std::size_t n) {
  Subset s(n);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

/// Fills match, ranking and statistics from an unweighted fused vector.
inline void finish_unweighted(SelectionRecord& rec, const std::vector<double>& fused,
                              const FusionConfig& config, const EngineOptions& options,
                              bool with_ratio) {
  rec.match_index = argmax_lowest_index(fused);
  rec.ranking = top_k_indices(fused, options.ranking_depth);
  rec.fused_stats = sample_mean_std(fused);
  rec.weights.assign(rec.subset.size(), 1.0);
  if (with_ratio) {
    try {
      rec.ratio_score = ratio_score(fused, config.r_window, config.epsilon);
    } catch (const Error&) {
      rec.ratio_score.reset();
    }
  }
}

template <typename Fn>
std::vector<SelectionRecord> per_query(std::size_t queries, const EngineOptions& options,
                                       Fn&& fn) {
  std::vector<SelectionRecord> records(queries);
  parallel_for(queries, options.workers, [&](std::size_t q) {
    SelectionRecord& rec = records[q];
    rec.query = q;
    try {
      fn(q, rec);
    } catch (const Error& e) {
      rec = SelectionRecord{};
      rec.query = q;
      rec.valid = false;
      rec.error = std::string(to_string(e.code()));
    }
  });
  return records;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline StrategyResult make_result(Strategy s, const SimilarityTensor& t,
                                  const FusionConfig& config) {
  StrategyResult r;
  r.strategy = s;
  r.technique_names = t.names();
  r.database_size = t.database_size();
  r.config = config;
  return r;
}

inline void validate_subset_members(const Subset& subset, std::size_t n) {
  if (subset.empty()) throw Error(ErrorCode::kInvalidArgument, "subset must not be empty");
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] >= n) {
      throw Error(ErrorCode::kInvalidArgument,
                  "technique index " + std::to_string(subset[i]) + " out of range");
    }
    if (i > 0 && subset[i] <= subset[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "subset must be sorted and unique");
    }
  }
}

}  // namespace detail

/// Dynamic fusion. Queries with q % F == 0 re-run the subset search over all
/// techniques; the others reuse the block's subset and only load its
/// members. Weights and the match are recomputed on every query. The
/// traverse is cut into [calibration, next calibration) blocks that run in
/// parallel.
inline StrategyResult run_dyn_mpf(const SimilarityTensor& tensor, const FusionConfig& config,
                                  const EngineOptions& options = {}) {
  config.validate(tensor.techniques(), tensor.database_size());
  StrategyResult result = detail::make_result(Strategy::kDynMpf, tensor, config);
  const std::size_t queries = tensor.queries();
  const std::size_t f = config.frame_separation;
  const std::size_t blocks = (queries + f - 1) / f;
  result.records.resize(queries);

  parallel_for(blocks, options.workers, [&](std::size_t b) {
    const std::size_t begin = b * f;
    const std::size_t end = std::min(begin + f, queries);
    std::optional<Subset> cached;
    for (std::size_t q = begin; q < end; ++q) {
      SelectionRecord& rec = result.records[q];
      rec.query = q;
      try {
        std::vector<NormalizedVector> slices;
        Subset subset;
        if (q == begin) {
          rec.calibrated = true;
          rec.techniques_touched = detail::all_techniques(tensor.techniques());
          slices = detail::normalize_all(tensor, q);
          SubsetScore best = select_best_subset(slices, config);
          cached = best.subset;
          subset = std::move(best.subset);
          rec.ratio_score = best.score;
        } else {
          if (!cached) {
            throw Error(ErrorCode::kNoCalibratedSubset,
                        "calibration failed for this block");
          }
          rec.techniques_touched = *cached;
          slices = detail::normalize_members(tensor, q, *cached);
          for (std::size_t m : *cached) {
            if (!slices[m].degenerate) subset.push_back(m);
          }
          if (subset.size() < config.min_subset_size) {
            throw Error(ErrorCode::kTooFewTechniques,
                        "cached subset has too few usable members");
          }
          rec.ratio_score =
              ratio_score(fuse_subset(slices, subset), config.r_window, config.epsilon);
        }
        rec.weights = technique_weights(slices, subset, config);
        rec.subset = std::move(subset);
        const FusedMatch fused = weighted_fuse_and_match(rec.subset, rec.weights, slices);
        rec.match_index = fused.match_index;
        rec.ranking = top_k_indices(fused.weighted_sum, options.ranking_depth);
        rec.fused_stats = fused.stats;
      } catch (const Error& e) {
        const bool calibrated = rec.calibrated;
        auto touched = std::move(rec.techniques_touched);
        rec = SelectionRecord{};
        rec.query = q;
        rec.valid = false;
        rec.error = std::string(to_string(e.code()));
        rec.calibrated = calibrated;
        rec.techniques_touched = std::move(touched);
      }
    }
  });
  return result;
}

/// Sum of all min-max normalized techniques, no selection or weighting.
inline StrategyResult run_full_mpf(const SimilarityTensor& tensor, const FusionConfig& config,
                                   const EngineOptions& options = {}) {
  StrategyResult result = detail::make_result(Strategy::kFullMpf, tensor, config);
  const Subset all = detail::all_techniques(tensor.techniques());
  result.records = detail::per_query(tensor.queries(), options, [&](std::size_t q,
                                                                    SelectionRecord& rec) {
    const auto slices = detail::normalize_all(tensor, q);
    rec.subset = all;
    rec.techniques_touched = all;
    detail::finish_unweighted(rec, fuse_subset(slices, all), config, options, true);
  });
  return result;
}

/// Fuses a uniformly drawn pair of non-degenerate techniques per query. The
/// draw for query q depends only on (seed, q).
inline StrategyResult run_random_pair(const SimilarityTensor& tensor, const FusionConfig& config,
                                      const EngineOptions& options = {}) {
  if (tensor.techniques() < 2) {
    throw Error(ErrorCode::kTooFewTechniques, "random pair needs at least two techniques");
  }
  StrategyResult result = detail::make_result(Strategy::kRandomPair, tensor, config);
  result.params = {{"seed", config.rng_seed}};
  result.records = detail::per_query(tensor.queries(), options, [&](std::size_t q,
                                                                    SelectionRecord& rec) {
    const auto slices = detail::normalize_all(tensor, q);
    std::vector<std::size_t> usable;
    for (std::size_t n = 0; n < slices.size(); ++n) {
      if (!slices[n].degenerate) usable.push_back(n);
    }
    if (usable.size() < 2) {
      throw Error(ErrorCode::kTooFewTechniques, "fewer than two usable techniques");
    }
    std::mt19937_64 rng(detail::splitmix64(config.rng_seed ^ detail::splitmix64(q)));
    const std::size_t m = usable.size();
    std::uniform_int_distribution<std::size_t> pick(0, m * (m - 1) / 2 - 1);
    std::size_t k = pick(rng);
    std::size_t i = 0;
    while (k >= m - 1 - i) {
      k -= m - 1 - i;
      ++i;
    }
    rec.subset = {usable[i], usable[i + 1 + k]};
    rec.techniques_touched = detail::all_techniques(tensor.techniques());
    detail::finish_unweighted(rec, fuse_subset(slices, rec.subset), config, options, true);
  });
  return result;
}

/// Splits techniques into min(3, N) tiers after a seeded shuffle. Sizes are
/// as even as possible with later tiers taking the remainder, which gives
/// 3/3/4 for ten techniques.
inline std::vector<std::vector<std::size_t>> random_tiers(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order = detail::all_techniques(n);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t tiers = std::min<std::size_t>(3, n);
  std::vector<std::vector<std::size_t>> out(tiers);
  const std::size_t base = n / tiers;
  const std::size_t extra = n % tiers;
  std::size_t pos = 0;
  for (std::size_t t = 0; t < tiers; ++t) {
    const std::size_t size = base + (t >= tiers - extra ? 1 : 0);
    out[t].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

/// Number of candidates kept out of `size` for a shortlist fraction, never
/// fewer than one.
inline std::size_t shortlist_size(double fraction, std::size_t size) {
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(size) - 1e-9));
  return std::clamp<std::size_t>(keep, 1, size);
}

/// Coarse-to-fine fusion. Tier 1 fuses over the whole database and keeps the
/// best ceil(f1 * D) candidates; each later tier re-normalizes its
/// techniques over the surviving candidates only. The ranking lists the
/// final tier's order first, then candidates dropped at earlier tiers.
inline StrategyResult run_hier_mpf(const SimilarityTensor& tensor, const FusionConfig& config,
                                   HierParams params, const EngineOptions& options = {}) {
  const std::size_t n = tensor.techniques();
  if (params.tiers.empty()) {
    params.tiers = random_tiers(n, config.rng_seed);
    if (params.shortlist_fractions.size() >= params.tiers.size()) {
      params.shortlist_fractions.resize(params.tiers.size() - 1);
    }
  }
  std::vector<int> seen(n, 0);
  for (const auto& tier : params.tiers) {
    if (tier.empty()) throw Error(ErrorCode::kInvalidArgument, "hierarchy tier is empty");
    for (std::size_t m : tier) {
      if (m >= n) throw Error(ErrorCode::kInvalidArgument, "tier member out of range");
      ++seen[m];
    }
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
    throw Error(ErrorCode::kInvalidArgument, "tiers must partition the technique set");
  }
  if (params.shortlist_fractions.size() + 1 != params.tiers.size()) {
    throw Error(ErrorCode::kInvalidArgument, "need one shortlist fraction per tier boundary");
  }
  for (double f : params.shortlist_fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "shortlist fractions must lie in (0, 1]");
    }
  }

  StrategyResult result = detail::make_result(Strategy::kHierMpf, tensor, config);
  nlohmann::json tiers = nlohmann::json::array();
  for (const auto& tier : params.tiers) {
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t m : tier) names.push_back(tensor.name(m));
    tiers.push_back(names);
  }
  result.params = {{"tiers", tiers}, {"shortlist_fractions", params.shortlist_fractions}};

  const Subset all = detail::all_techniques(n);
  result.records = detail::per_query(tensor.queries(), options, [&](std::size_t q,
                                                                    SelectionRecord& rec) {
    std::vector<std::size_t> candidates = detail::all_techniques(tensor.database_size());
    std::vector<std::vector<std::size_t>> dropped;  // per tier, best first
    std::vector<double> last_scores;
    for (std::size_t t = 0; t < params.tiers.size(); ++t) {
      std::vector<double> fused(candidates.size(), 0.0);
      if (candidates.size() >= 2) {
        std::vector<double> local(candidates.size());
        for (std::size_t m : params.tiers[t]) {
          const auto full = tensor.slice(m, q);
          for (std::size_t c = 0; c < candidates.size(); ++c) local[c] = full[candidates[c]];
          const NormalizedVector norm = minmax_normalize(local);
          for (std::size_t c = 0; c < candidates.size(); ++c) fused[c] += norm.values[c];
        }
      }
      std::vector<std::size_t> order(candidates.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return fused[a] > fused[b]; });
      std::vector<std::size_t> ranked(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = candidates[order[i]];
      if (t + 1 == params.tiers.size()) {
        candidates = std::move(ranked);
        last_scores = std::move(fused);
        break;
      }
      const std::size_t keep = shortlist_size(params.shortlist_fractions[t], ranked.size());
      dropped.emplace_back(ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
      ranked.resize(keep);
      std::sort(ranked.begin(), ranked.end());
      candidates = std::move(ranked);
    }
    std::vector<std::size_t> ranking = std::move(candidates);
    for (auto it = dropped.rbegin(); it != dropped.rend(); ++it) {
      ranking.insert(ranking.end(), it->begin(), it->end());
    }
    rec.subset = all;
    rec.techniques_touched = all;
    rec.weights.assign(n, 1.0);
    rec.match_index = ranking.front();
    ranking.resize(std::min(ranking.size(), options.ranking_depth));
    rec.ranking = std::move(ranking);
    rec.fused_stats = sample_mean_std(last_scores);
  });
  return result;
}

/// Unweighted fusion of a fixed subset on every query.
inline StrategyResult run_static_subset(const SimilarityTensor& tensor, const FusionConfig& config,
                                        const Subset& subset, const EngineOptions& options = {}) {
  detail::validate_subset_members(subset, tensor.techniques());
  StrategyResult result = detail::make_result(Strategy::kStaticSubset, tensor, config);
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t m : subset) names.push_back(tensor.name(m));
  result.params = {{"subset", names}};
  result.records = detail::per_query(tensor.queries(), options, [&](std::size_t q,
                                                                    SelectionRecord& rec) {
    const auto slices = detail::normalize_members(tensor, q, subset);
    rec.subset = subset;
    rec.techniques_touched = subset;
    detail::finish_unweighted(rec, fuse_subset(slices, subset), config, options, true);
  });
  return result;
}

struct OracleChoice {
  Subset subset;
  double recall = 0.0;
};

/// Recall@1 of the unweighted fusion of `subset` over the evaluable queries.
inline double static_subset_recall(const SimilarityTensor& tensor, const GroundTruth& gt,
                                   const Subset& subset) {
  std::size_t hits = 0;
  std::size_t evaluated = 0;
  for (std::size_t q = 0; q < tensor.queries(); ++q) {
    if (!gt.evaluable(q)) continue;
    ++evaluated;
    const auto slices = detail::normalize_members(tensor, q, subset);
    if (gt.contains(q, argmax_lowest_index(fuse_subset(slices, subset)))) ++hits;
  }
  return evaluated == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(evaluated);
}

/// Ground-truth oracle: the subset of exactly `size` techniques with the
/// best Recall@1, lowest lexicographic subset on ties.
inline OracleChoice oracle_best_static_subset(const SimilarityTensor& tensor,
                                              const GroundTruth& gt, std::size_t size) {
  gt.validate(tensor.queries(), tensor.database_size());
  const std::size_t n = tensor.techniques();
  if (size == 0 || size > n) {
    throw Error(ErrorCode::kInvalidArgument, "oracle subset size out of range");
  }
  std::vector<Subset> candidates;
  if (size == 1) {
    for (std::size_t i = 0; i < n; ++i) candidates.push_back({i});
  } else {
    candidates = enumerate_subsets(n, size, size);
  }
  OracleChoice best;
  bool have = false;
  for (const auto& s : candidates) {
    const double r = static_subset_recall(tensor, gt, s);
    if (!have || r > best.recall) {
      best = {s, r};
      have = true;
    }
  }
  return best;
}

/// The single technique with the best Recall@1 (lowest index on ties).
inline std::pair<TechniqueId, double> oracle_best_single(const SimilarityTensor& tensor,
                                                         const GroundTruth& gt) {
  const OracleChoice c = oracle_best_static_subset(tensor, gt, 1);
  return {tensor.technique(c.subset.front()), c.recall};
}

inline StrategyResult run_best_single_oracle(const SimilarityTensor& tensor,
                                             const GroundTruth& gt, const FusionConfig& config,
                                             const EngineOptions& options = {}) {
  const auto [technique, recall] = oracle_best_single(tensor, gt);
  StrategyResult result = run_static_subset(tensor, config, {technique.index}, options);
  result.strategy = Strategy::kBestSingleOracle;
  result.params = {{"technique", technique.name}, {"oracle_recall_at_1", recall}};
  return result;
}

inline nlohmann::json config_to_json(const FusionConfig& c) {
  nlohmann::json j = {{"r_window", c.r_window},
                      {"frame_separation", c.frame_separation},
                      {"min_subset_size", c.min_subset_size},
                      {"epsilon", c.epsilon},
                      {"rng_seed", c.rng_seed},
                      {"tie_break", std::string(to_string(c.tie_break))},
                      {"weighting", std::string(to_string(c.weighting))}};
  j["max_subset_size"] = c.max_subset_size ? nlohmann::json(*c.max_subset_size) : nlohmann::json();
  return j;
}

inline nlohmann::json record_to_json(const SelectionRecord& r,
                                     const std::vector<std::string>& names) {
  auto name_list = [&](const std::vector<std::size_t>& idx) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t i : idx) a.push_back(names.at(i));
    return a;
  };
  nlohmann::json j = {{"query", r.query}, {"valid", r.valid}, {"calibrated", r.calibrated}};
  if (!r.valid) j["error"] = r.error;
  j["subset"] = name_list(r.subset);
  nlohmann::json w = nlohmann::json::object();
  for (std::size_t i = 0; i < r.subset.size() && i < r.weights.size(); ++i) {
    w[names.at(r.subset[i])] = r.weights[i];
  }
  j["weights"] = w;
  j["ratio_score"] = r.ratio_score ? nlohmann::json(*r.ratio_score) : nlohmann::json();
  j["match_index"] = r.match_index;
  j["fused_mean"] = r.fused_stats.mean;
  j["fused_std"] = r.fused_stats.stddev;
  j["ranking"] = r.ranking;
  j["techniques_touched"] = name_list(r.techniques_touched);
  return j;
}

/// Serialized result. Contains no timing or worker information, so equal
/// inputs give byte-identical output.
inline nlohmann::json result_to_json(const StrategyResult& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) records.push_back(record_to_json(rec, r.technique_names));
  return {{"strategy", std::string(to_string(r.strategy))},
          {"techniques", r.technique_names},
          {"database_size", r.database_size},
          {"config", config_to_json(r.config)},
          {"params", r.params},
          {"records", records}};
}

}  // namespace dynfuse

#endif  // DYNFUSE_ENGINE_HPP
