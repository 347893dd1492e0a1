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

// Domain types and elementary vector operations shared by every other
// dynfuse header.
//
// A similarity vector holds the scores of one query against every database
// entry for one technique; larger means more similar. A tensor stacks these
// as techniques x queries x database entries.

#ifndef DYNFUSE_CORE_HPP
#define DYNFUSE_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dynfuse/error.hpp"

namespace dynfuse {

struct TechniqueId {
  std::size_t index = 0;
  std::string name;

  friend bool operator==(const TechniqueId&, const TechniqueId&) = default;
};

/// Sorted member indices of a technique subset.
using Subset = std::vector<std::size_t>;

/// Output of a normalization. `degenerate` is set when the input was
/// constant and therefore carries no place information.
struct NormalizedVector {
  std::vector<double> values;
  bool degenerate = false;
};

namespace detail {

inline void require_similarity_vector(std::span<const double> v) {
  if (v.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "similarity vector needs at least two entries");
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "similarity vector contains a non-finite value");
    }
  }
}

}  // namespace detail

/// Smallest index attaining the maximum.
inline std::size_t argmax_lowest_index(std::span<const double> v) {
  if (v.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "argmax of an empty vector");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

/// Indices of the `k` largest entries, best first; equal scores keep the
/// lower index first.
inline std::vector<std::size_t> top_k_indices(std::span<const double> v,
                                              std::size_t k) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, v.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), better);
  order.resize(k);
  return order;
}

/// Affine rescale to [0, 1]. A constant input maps to all zeros and is
/// flagged degenerate.
inline NormalizedVector minmax_normalize(std::span<const double> v) {
  detail::require_similarity_vector(v);
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  NormalizedVector out;
  out.values.assign(v.size(), 0.0);
  if (hi == lo) {
    out.degenerate = true;
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.values[i] = (v[i] - lo) / range;
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) convention
};

inline MeanStd sample_mean_std(std::span<const double> v) {
  MeanStd s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return s;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return s;
}

/// Standard score with the sample standard deviation. A constant input is
/// returned unchanged and flagged degenerate.
inline NormalizedVector zscore_normalize(std::span<const double> v) {
  detail::require_similarity_vector(v);
  NormalizedVector out;
  out.values.assign(v.begin(), v.end());
  const MeanStd s = sample_mean_std(v);
  if (!(s.stddev > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (double& x : out.values) x = (x - s.mean) / s.stddev;
  return out;
}

/// Dense N x Q x D similarity data with technique labels.
class SimilarityTensor {
 public:
  SimilarityTensor() = default;

  SimilarityTensor(std::vector<std::string> names, std::size_t queries,
                   std::size_t database_size, std::vector<double> data)
      : names_(std::move(names)),
        queries_(queries),
        database_size_(database_size),
        data_(std::move(data)) {
    if (names_.empty()) {
      throw Error(ErrorCode::kEmptyEnsemble, "tensor has no techniques");
    }
    if (database_size_ < 2) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "database size must be at least 2");
    }
    if (data_.size() != names_.size() * queries_ * database_size_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "tensor payload does not match N x Q x D");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : names_) {
      if (name.empty() || !seen.insert(name).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "technique names must be unique and non-empty", name);
      }
    }
    for (double x : data_) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kNonFiniteValue, "tensor contains a non-finite value");
      }
    }
  }

  std::size_t techniques() const noexcept { return names_.size(); }
  std::size_t queries() const noexcept { return queries_; }
  std::size_t database_size() const noexcept { return database_size_; }

  const std::string& name(std::size_t n) const { return names_.at(n); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  TechniqueId technique(std::size_t n) const { return {n, names_.at(n)}; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t n = 0; n < names_.size(); ++n) {
      if (names_[n] == name) return n;
    }
    return std::nullopt;
  }

  std::span<const double> slice(std::size_t technique, std::size_t query) const {
    return {data_.data() + offset(technique, query), database_size_};
  }

  std::span<double> mutable_slice(std::size_t technique, std::size_t query) {
    return {data_.data() + offset(technique, query), database_size_};
  }

  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t offset(std::size_t technique, std::size_t query) const {
    if (technique >= names_.size() || query >= queries_) {
      throw Error(ErrorCode::kInvalidArgument, "tensor slice out of range");
    }
    return (technique * queries_ + query) * database_size_;
  }

  std::vector<std::string> names_;
  std::size_t queries_ = 0;
  std::size_t database_size_ = 0;
  std::vector<double> data_;
};

enum class TieBreak {
  kLowestIndex,  // pure lexicographic order over member lists
  kSmallestSubsetThenLexicographic,
};

enum class Weighting {
  kRatio,    // per-technique ratio score
  kUniform,  // every member weighs 1
};

inline std::string_view to_string(TieBreak t) noexcept {
  return t == TieBreak::kLowestIndex ? "lowest-index"
                                     : "smallest-subset-then-lexicographic";
}

inline std::string_view to_string(Weighting w) noexcept {
  return w == Weighting::kRatio ? "ratio" : "uniform";
}

struct FusionConfig {
  std::size_t r_window = 0;
  std::size_t frame_separation = 1;
  std::size_t min_subset_size = 2;
  std::optional<std::size_t> max_subset_size;  // unset means N
  double epsilon = 1e-12;
  std::uint64_t rng_seed = 42;
  TieBreak tie_break = TieBreak::kSmallestSubsetThenLexicographic;
  Weighting weighting = Weighting::kRatio;

  std::size_t resolved_max_subset_size(std::size_t n) const {
    return max_subset_size.value_or(n);
  }

  void validate(std::size_t n_techniques, std::size_t database_size) const {
    if (frame_separation == 0) {
      throw Error(ErrorCode::kConfigError, "frame separation must be positive",
                  "frame_separation");
    }
    if (min_subset_size < 2) {
      throw Error(ErrorCode::kConfigError, "minimum subset size must be at least 2",
                  "min_subset_size");
    }
    const std::size_t max_size = resolved_max_subset_size(n_techniques);
    if (min_subset_size > max_size) {
      throw Error(ErrorCode::kConfigError,
                  "minimum subset size exceeds maximum subset size",
                  "min_subset_size");
    }
    if (max_size > n_techniques) {
      throw Error(ErrorCode::kConfigError,
                  "maximum subset size exceeds the number of techniques",
                  "max_subset_size");
    }
    if (r_window >= database_size) {
      throw Error(ErrorCode::kConfigError,
                  "r_window must be smaller than the database size", "r_window");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(ErrorCode::kConfigError, "epsilon must be a positive real",
                  "epsilon");
    }
  }
};

/// Acceptable database indices per query. Queries with an empty set are
/// not evaluated.
struct GroundTruth {
  std::vector<std::vector<std::size_t>> acceptable;

  std::size_t queries() const noexcept { return acceptable.size(); }

  bool evaluable(std::size_t q) const {
    return q < acceptable.size() && !acceptable[q].empty();
  }

  bool contains(std::size_t q, std::size_t index) const {
    if (q >= acceptable.size()) return false;
    const auto& set = acceptable[q];
    return std::find(set.begin(), set.end(), index) != set.end();
  }

  void validate(std::size_t queries, std::size_t database_size) const {
    if (acceptable.size() != queries) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "ground truth has " + std::to_string(acceptable.size()) +
                      " entries for " + std::to_string(queries) + " queries");
    }
    for (const auto& set : acceptable) {
      for (std::size_t i : set) {
        if (i >= database_size) {
          throw Error(ErrorCode::kDimensionMismatch,
                      "ground-truth index " + std::to_string(i) +
                          " outside the database");
        }
      }
    }
  }

  /// Expands (index, tolerance) pairs into {index - tol, ..., index + tol}
  /// clipped to the database.
  static GroundTruth from_indices(std::span<const std::size_t> indices,
                                  std::size_t tolerance, std::size_t database_size) {
    GroundTruth gt;
    gt.acceptable.reserve(indices.size());
    for (std::size_t idx : indices) {
      std::vector<std::size_t> set;
      const std::size_t lo = idx > tolerance ? idx - tolerance : 0;
      const std::size_t hi = std::min(idx + tolerance, database_size - 1);
      for (std::size_t i = lo; i <= hi && i < database_size; ++i) set.push_back(i);
      gt.acceptable.push_back(std::move(set));
    }
    return gt;
  }
};

/// Outcome of one query under one strategy.
struct SelectionRecord {
  std::size_t query = 0;
  bool valid = true;
  std::string error;  // error code name when invalid
  bool calibrated = false;
  Subset subset;
  std::vector<double> weights;  // aligned with `subset`
  std::optional<double> ratio_score;
  std::size_t match_index = 0;
  MeanStd fused_stats;  // before the final standard-score normalization
  std::vector<std::size_t> ranking;
  std::vector<std::size_t> techniques_touched;
};

}  // namespace dynfuse

#endif  // DYNFUSE_CORE_HPP
