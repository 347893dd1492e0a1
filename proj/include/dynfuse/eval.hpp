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

// Recall@K, ratio-score histograms split by match correctness, and the
// calibration-period sweep.

#ifndef DYNFUSE_EVAL_HPP
#define DYNFUSE_EVAL_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynfuse/core.hpp"
#include "dynfuse/engine.hpp"
#include "dynfuse/error.hpp"

namespace dynfuse {

struct QueryOutcome {
  std::size_t query = 0;
  bool evaluated = false;  // valid record with a non-empty ground-truth set
  std::optional<std::size_t> first_hit_rank;  // 0-based rank of the first acceptable index
};

struct RecallReport {
  std::string strategy;
  std::map<std::size_t, double> recall_at;
  std::vector<QueryOutcome> queries;
  std::size_t valid_count = 0;

  bool correct_at(std::size_t q, std::size_t k) const {
    const auto& o = queries.at(q);
    return o.evaluated && o.first_hit_rank && *o.first_hit_rank < k;
  }
};

struct AliasingHistogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> correct;
  std::vector<std::size_t> incorrect;
  std::optional<double> mean_ratio_correct;
  std::optional<double> mean_ratio_incorrect;
  std::size_t total = 0;
};

namespace detail {

inline std::vector<const SelectionRecord*> sorted_records(const StrategyResult& r) {
  std::vector<const SelectionRecord*> out;
  out.reserve(r.records.size());
  for (const auto& rec : r.records) out.push_back(&rec);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto* a, const auto* b) { return a->query < b->query; });
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// A query is correct at K when any of its top-K ranked indices is
/// acceptable. Recall is taken over valid records whose ground-truth set is
/// non-empty.
inline RecallReport recall_at_k(const StrategyResult& result, const GroundTruth& gt,
                                std::span<const std::size_t> ks) {
  if (ks.empty()) throw Error(ErrorCode::kInvalidArgument, "no K values requested");
  for (std::size_t k : ks) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "K must be at least 1");
  }
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  RecallReport report;
  report.strategy = std::string(to_string(result.strategy));
  for (const SelectionRecord* rec : detail::sorted_records(result)) {
    QueryOutcome o;
    o.query = rec->query;
    o.evaluated = rec->valid && gt.evaluable(rec->query);
    if (o.evaluated) {
      const std::size_t needed = result.database_size > 0
                                     ? std::min(max_k, result.database_size)
                                     : max_k;
      if (rec->ranking.size() < needed) {
        throw Error(ErrorCode::kMissingRanking,
                    "query " + std::to_string(rec->query) + " has a ranking of depth " +
                        std::to_string(rec->ranking.size()) + ", need " +
                        std::to_string(needed));
      }
      for (std::size_t i = 0; i < rec->ranking.size(); ++i) {
        if (gt.contains(rec->query, rec->ranking[i])) {
          o.first_hit_rank = i;
          break;
        }
      }
      ++report.valid_count;
    }
    report.queries.push_back(o);
  }
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (const auto& o : report.queries) {
      if (o.evaluated && o.first_hit_rank && *o.first_hit_rank < k) ++hits;
    }
    report.recall_at[k] = report.valid_count == 0
                              ? 0.0
                              : static_cast<double>(hits) / static_cast<double>(report.valid_count);
  }
  return report;
}

/// Counts correct and incorrect top-1 matches per ratio-score bin. Only
/// valid, evaluable records that carry a ratio score are counted.
inline AliasingHistogram aliasing_histogram(const StrategyResult& result, const GroundTruth& gt,
                                            std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  struct Sample {
    double ratio;
    bool correct;
  };
  std::vector<Sample> samples;
  for (const SelectionRecord* rec : detail::sorted_records(result)) {
    if (!rec->valid || !rec->ratio_score || !gt.evaluable(rec->query)) continue;
    samples.push_back({*rec->ratio_score, gt.contains(rec->query, rec->match_index)});
  }
  AliasingHistogram h;
  h.correct.assign(bins, 0);
  h.incorrect.assign(bins, 0);
  double lo = 0.0;
  double hi = 1.0;
  if (!samples.empty()) {
    const auto [mn, mx] = std::minmax_element(
        samples.begin(), samples.end(),
        [](const Sample& a, const Sample& b) { return a.ratio < b.ratio; });
    lo = mn->ratio;
    hi = mx->ratio;
    if (hi == lo) hi = lo + 1.0;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
  h.edges.back() = hi;
  double sum_ok = 0.0, sum_bad = 0.0;
  std::size_t n_ok = 0, n_bad = 0;
  for (const auto& s : samples) {
    auto b = static_cast<std::size_t>(std::floor((s.ratio - lo) / width));
    b = std::min(b, bins - 1);
    if (s.correct) {
      ++h.correct[b];
      sum_ok += s.ratio;
      ++n_ok;
    } else {
      ++h.incorrect[b];
      sum_bad += s.ratio;
      ++n_bad;
    }
  }
  h.total = samples.size();
  if (n_ok > 0) h.mean_ratio_correct = sum_ok / static_cast<double>(n_ok);
  if (n_bad > 0) h.mean_ratio_incorrect = sum_bad / static_cast<double>(n_bad);
  return h;
}

/// Dynamic fusion Recall@1 for each calibration period.
inline std::map<std::size_t, RecallReport> frame_separation_sweep(
    const SimilarityTensor& tensor, const GroundTruth& gt, FusionConfig config,
    std::span<const std::size_t> f_values, const EngineOptions& options = {}) {
  if (f_values.empty()) {
    throw Error(ErrorCode::kConfigError, "no frame separation values", "f_values");
  }
  for (std::size_t f : f_values) {
    if (f == 0) {
      throw Error(ErrorCode::kConfigError, "frame separation must be positive", "f_values");
    }
  }
  gt.validate(tensor.queries(), tensor.database_size());
  std::map<std::size_t, RecallReport> out;
  const std::size_t k1[] = {1};
  for (std::size_t f : f_values) {
    config.frame_separation = f;
    out[f] = recall_at_k(run_dyn_mpf(tensor, config, options), gt, k1);
  }
  return out;
}

inline nlohmann::json recall_to_json(const RecallReport& r) {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& o : r.queries) {
    queries.push_back({{"query", o.query},
                       {"evaluated", o.evaluated},
                       {"first_hit_rank", o.first_hit_rank ? nlohmann::json(*o.first_hit_rank)
                                                           : nlohmann::json()}});
  }
  return {{"strategy", r.strategy},
          {"valid_count", r.valid_count},
          {"recall_at", recall},
          {"queries", queries}};
}

/// Columns: strategy,K,recall
inline std::string recall_to_csv(const RecallReport& r) {
  std::string out = "strategy,K,recall\n";
  for (const auto& [k, v] : r.recall_at) {
    out += r.strategy + "," + std::to_string(k) + "," + detail::format_number(v) + "\n";
  }
  return out;
}

inline nlohmann::json histogram_to_json(const AliasingHistogram& h) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  return {{"edges", h.edges},
          {"correct", h.correct},
          {"incorrect", h.incorrect},
          {"total", h.total},
          {"mean_ratio_correct", opt(h.mean_ratio_correct)},
          {"mean_ratio_incorrect", opt(h.mean_ratio_incorrect)}};
}

/// Columns: bin_lo,bin_hi,correct,incorrect
inline std::string histogram_to_csv(const AliasingHistogram& h) {
  std::string out = "bin_lo,bin_hi,correct,incorrect\n";
  for (std::size_t b = 0; b < h.correct.size(); ++b) {
    out += detail::format_number(h.edges[b]) + "," + detail::format_number(h.edges[b + 1]) +
           "," + std::to_string(h.correct[b]) + "," + std::to_string(h.incorrect[b]) + "\n";
  }
  return out;
}

/// Columns: F,recall_at_1,valid_count
inline std::string sweep_to_csv(const std::map<std::size_t, RecallReport>& sweep) {
  std::string out = "F,recall_at_1,valid_count\n";
  for (const auto& [f, r] : sweep) {
    out += std::to_string(f) + "," + detail::format_number(r.recall_at.at(1)) + "," +
           std::to_string(r.valid_count) + "\n";
  }
  return out;
}

}  // namespace dynfuse

#endif  // DYNFUSE_EVAL_HPP
