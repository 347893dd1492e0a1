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

// Dynamic multi-process fusion for a single query: ratio scoring of fused
// similarity vectors, exhaustive subset search, per-technique confidence
// weights and the final weighted match.
//
// All functions here take min-max normalized vectors indexed by technique.
// Vectors of techniques that were not loaded for a query may be left empty
// as long as they are not referenced by the subset being fused.

#ifndef DYNFUSE_FUSION_HPP
#define DYNFUSE_FUSION_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dynfuse/core.hpp"
#include "dynfuse/error.hpp"

namespace dynfuse {

struct SubsetScore {
  Subset subset;
  double score = 0.0;
};

struct FusedMatch {
  std::vector<double> values;  // standard-score normalized weighted sum
  std::vector<double> weighted_sum;
  std::size_t match_index = 0;
  MeanStd stats;  // of the weighted sum before normalization
  bool degenerate = false;
};

/// Maximum of `v` divided by the largest entry farther than `r_window`
/// from the argmax. The divisor is clamped below at `epsilon`.
inline double ratio_score(std::span<const double> v, std::size_t r_window,
                          double epsilon) {
  const std::size_t best = argmax_lowest_index(v);
  double outside = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t dist = i > best ? i - best : best - i;
    if (dist > r_window) {
      outside = found ? std::max(outside, v[i]) : v[i];
      found = true;
    }
  }
  if (!found) {
    throw Error(ErrorCode::kWindowCoversAll,
                "exclusion window covers the whole similarity vector");
  }
  return v[best] / std::max(outside, epsilon);
}

/// True when `a` wins a score tie against `b`.
inline bool subset_precedes(const Subset& a, const Subset& b, TieBreak rule) {
  if (rule == TieBreak::kSmallestSubsetThenLexicographic && a.size() != b.size()) {
    return a.size() < b.size();
  }
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace detail {

inline void validate_subset_bounds(std::size_t n, std::size_t min_size,
                                   std::size_t max_size) {
  if (min_size < 2 || min_size > max_size || max_size > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "subset bounds must satisfy 2 <= min <= max <= n");
  }
}

inline std::vector<std::size_t> usable_techniques(std::size_t n,
                                                  std::span<const std::size_t> degenerate) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(degenerate.begin(), degenerate.end(), i) == degenerate.end()) {
      usable.push_back(i);
    }
  }
  return usable;
}

inline std::vector<std::size_t> degenerate_indices(
    std::span<const NormalizedVector> slices) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].degenerate) out.push_back(i);
  }
  return out;
}

}  // namespace detail

/// Every subset of the non-degenerate techniques with size in
/// [min_size, max_size], by ascending size and then lexicographically.
inline std::vector<Subset> enumerate_subsets(std::size_t n, std::size_t min_size,
                                             std::size_t max_size,
                                             std::span<const std::size_t> degenerate = {}) {
  detail::validate_subset_bounds(n, min_size, max_size);
  const std::vector<std::size_t> usable = detail::usable_techniques(n, degenerate);
  if (usable.size() < min_size) {
    throw Error(ErrorCode::kTooFewTechniques,
                std::to_string(usable.size()) + " usable techniques, need " +
                    std::to_string(min_size));
  }
  std::vector<Subset> out;
  const std::size_t top = std::min(max_size, usable.size());
  for (std::size_t k = min_size; k <= top; ++k) {
    // Positions into `usable`, advanced like an odometer.
    std::vector<std::size_t> pos(k);
    for (std::size_t i = 0; i < k; ++i) pos[i] = i;
    while (true) {
      Subset s(k);
      for (std::size_t i = 0; i < k; ++i) s[i] = usable[pos[i]];
      out.push_back(std::move(s));
      std::size_t i = k;
      while (i > 0 && pos[i - 1] == usable.size() - k + (i - 1)) --i;
      if (i == 0) break;
      ++pos[i - 1];
      for (std::size_t j = i; j < k; ++j) pos[j] = pos[j - 1] + 1;
    }
  }
  return out;
}

/// Element-wise sum of the member vectors, accumulated in member order.
inline std::vector<double> fuse_subset(std::span<const NormalizedVector> slices,
                                       const Subset& subset) {
  if (subset.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot fuse an empty subset");
  }
  std::vector<double> sum;
  for (std::size_t m : subset) {
    if (m >= slices.size() || slices[m].values.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "subset member " + std::to_string(m) + " has no similarity vector");
    }
    const auto& v = slices[m].values;
    if (sum.empty()) {
      sum.assign(v.size(), 0.0);
    } else if (v.size() != sum.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "fused vectors differ in length");
    }
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  return sum;
}

/// Exhaustive search for the subset whose fused vector has the largest
/// ratio score. Degenerate techniques are skipped; score ties go to the
/// subset preferred by `config.tie_break`.
inline SubsetScore select_best_subset(std::span<const NormalizedVector> slices,
                                      const FusionConfig& config) {
  const std::size_t n = slices.size();
  const std::size_t max_size = config.resolved_max_subset_size(n);
  detail::validate_subset_bounds(n, config.min_subset_size, max_size);
  const std::vector<std::size_t> degenerate = detail::degenerate_indices(slices);
  const std::vector<std::size_t> usable = detail::usable_techniques(n, degenerate);
  if (usable.size() < config.min_subset_size) {
    throw Error(ErrorCode::kTooFewTechniques,
                std::to_string(usable.size()) + " usable techniques, need " +
                    std::to_string(config.min_subset_size));
  }
  const std::size_t dim = slices[usable.front()].values.size();

  // Depth-first over include/exclude decisions with a stack of partial sums,
  // so each subset costs one vector add instead of |subset|.
  std::vector<std::vector<double>> partial(max_size + 1, std::vector<double>(dim, 0.0));
  Subset current;
  SubsetScore best;
  bool have_best = false;

  auto visit = [&](auto&& self, std::size_t next) -> void {
    const std::size_t depth = current.size();
    if (depth >= config.min_subset_size) {
      const double score = ratio_score(partial[depth], config.r_window, config.epsilon);
      if (!have_best || score > best.score ||
          (score == best.score && subset_precedes(current, best.subset, config.tie_break))) {
        best.subset = current;
        best.score = score;
        have_best = true;
      }
    }
    if (depth == max_size) return;
    for (std::size_t u = next; u < usable.size(); ++u) {
      const auto& v = slices[usable[u]].values;
      if (v.size() != dim) {
        throw Error(ErrorCode::kDimensionMismatch, "fused vectors differ in length");
      }
      auto& dst = partial[depth + 1];
      const auto& src = partial[depth];
      for (std::size_t i = 0; i < dim; ++i) dst[i] = src[i] + v[i];
      current.push_back(usable[u]);
      self(self, u + 1);
      current.pop_back();
    }
  };
  visit(visit, 0);
  return best;
}

/// Per-member confidence weights aligned with `subset`.
inline std::vector<double> technique_weights(std::span<const NormalizedVector> slices,
                                             const Subset& subset,
                                             const FusionConfig& config) {
  std::vector<double> weights;
  weights.reserve(subset.size());
  for (std::size_t m : subset) {
    if (m >= slices.size() || slices[m].values.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "subset member " + std::to_string(m) + " has no similarity vector");
    }
    if (config.weighting == Weighting::kUniform) {
      weights.push_back(1.0);
    } else {
      weights.push_back(ratio_score(slices[m].values, config.r_window, config.epsilon));
    }
  }
  return weights;
}

/// Weighted sum of the member vectors followed by standard-score
/// normalization. The match is the lowest-index argmax; the normalization
/// is monotone, so it is taken on the weighted sum directly.
inline FusedMatch weighted_fuse_and_match(const Subset& subset,
                                          std::span<const double> weights,
                                          std::span<const NormalizedVector> slices) {
  if (subset.empty() || weights.size() != subset.size()) {
    throw Error(ErrorCode::kInvalidArgument, "weights must align with a non-empty subset");
  }
  std::vector<double> sum;
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const std::size_t m = subset[j];
    if (m >= slices.size() || slices[m].values.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "subset member " + std::to_string(m) + " has no similarity vector");
    }
    const auto& v = slices[m].values;
    if (sum.empty()) sum.assign(v.size(), 0.0);
    if (v.size() != sum.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "fused vectors differ in length");
    }
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += weights[j] * v[i];
  }
  FusedMatch out;
  out.match_index = argmax_lowest_index(sum);
  out.stats = sample_mean_std(sum);
  NormalizedVector z = zscore_normalize(sum);
  out.values = std::move(z.values);
  out.degenerate = z.degenerate;
  out.weighted_sum = std::move(sum);
  return out;
}

}  // namespace dynfuse

#endif  // DYNFUSE_FUSION_HPP
