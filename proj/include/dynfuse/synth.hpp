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

// Seeded synthetic technique ensembles with controllable perceptual
// aliasing.
//
// For technique n and query q the similarity vector is
//
//   uniform noise in [0, noise_sigma)
//   + peak_strength[n] at the ground-truth index (unless n fails on q)
//   + alias_strength[n] at each of `distractors` locations.
//
// The ground-truth index advances linearly, q * D / Q. Each query draws one
// shared distractor location; a technique's first distractor lands there
// with probability alias_correlation, all other distractors get private
// locations. Distractors keep at least 2 * r_window + 2 indices (and more
// than the ground-truth tolerance) away from the ground truth, and more
// than 2 * r_window away from each other. Values are rounded to float32 so
// a tensor written to disk reloads bit-exactly.

#ifndef DYNFUSE_SYNTH_HPP
#define DYNFUSE_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynfuse/core.hpp"
#include "dynfuse/error.hpp"

namespace dynfuse {

struct QueryRange {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

struct SynthSpec {
  std::vector<std::string> names;  // empty: t0, t1, ...
  std::size_t n_techniques = 2;
  std::size_t queries = 100;
  std::size_t database_size = 100;
  std::vector<double> peak_strength;   // per technique, in [0, 1]
  std::vector<double> alias_strength;  // per technique, >= 0
  std::size_t distractors = 1;
  double alias_correlation = 0.0;
  double noise_sigma = 0.0;
  std::vector<std::vector<QueryRange>> failure_schedule;  // per technique or empty
  std::optional<std::size_t> drift_period;
  std::size_t drift_failures = 0;  // techniques failing during each drift condition
  std::size_t r_window = 0;
  std::size_t gt_tolerance = 0;
  std::uint64_t seed = 42;

  std::vector<std::string> resolved_names() const {
    if (!names.empty()) return names;
    std::vector<std::string> out;
    for (std::size_t n = 0; n < n_techniques; ++n) out.push_back("t" + std::to_string(n));
    return out;
  }

  void validate() const {
    auto bad = [](const std::string& what) { return Error(ErrorCode::kInvalidSpec, what); };
    if (n_techniques == 0) throw bad("n_techniques must be positive");
    if (queries == 0) throw bad("queries must be positive");
    if (database_size <= 2 * r_window + 1) throw bad("database_size must exceed 2 * r_window + 1");
    if (!names.empty() && names.size() != n_techniques) throw bad("one name per technique");
    if (peak_strength.size() != n_techniques) throw bad("one peak_strength per technique");
    if (alias_strength.size() != n_techniques) throw bad("one alias_strength per technique");
    for (double p : peak_strength) {
      if (!(p >= 0.0 && p <= 1.0)) throw bad("peak_strength must lie in [0, 1]");
    }
    for (double a : alias_strength) {
      if (!(a >= 0.0) || !std::isfinite(a)) throw bad("alias_strength must be non-negative");
    }
    if (!(alias_correlation >= 0.0 && alias_correlation <= 1.0)) {
      throw bad("alias_correlation must lie in [0, 1]");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
      throw bad("noise_sigma must be non-negative");
    }
    if (!failure_schedule.empty() && failure_schedule.size() != n_techniques) {
      throw bad("failure_schedule needs one entry per technique");
    }
    for (const auto& ranges : failure_schedule) {
      for (const auto& r : ranges) {
        if (r.begin >= r.end || r.end > queries) throw bad("failure range outside [0, queries)");
      }
    }
    if (drift_period && *drift_period == 0) throw bad("drift_period must be positive");
    if (drift_failures > n_techniques) throw bad("drift_failures exceeds n_techniques");
    if (drift_failures > 0 && !drift_period) throw bad("drift_failures requires drift_period");
  }
};

struct SynthData {
  SimilarityTensor tensor;
  GroundTruth ground_truth;
  std::vector<std::size_t> gt_index;
  std::vector<std::vector<bool>> failed;  // [technique][query]
};

namespace detail {

class LocationSampler {
 public:
  LocationSampler(std::mt19937_64& rng, std::size_t database_size, std::size_t gt,
                  std::size_t gt_gap, std::size_t spacing)
      : rng_(rng), pick_(0, database_size - 1), gt_(gt), gt_gap_(gt_gap), spacing_(spacing) {}

  std::size_t draw() {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const std::size_t l = pick_(rng_);
      if (distance(l, gt_) < gt_gap_) continue;
      bool clear = true;
      for (std::size_t u : used_) {
        if (distance(l, u) <= spacing_) {
          clear = false;
          break;
        }
      }
      if (clear) {
        used_.push_back(l);
        return l;
      }
    }
    throw Error(ErrorCode::kInvalidSpec,
                "database too small to place distractors with the requested spacing");
  }

 private:
  static std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

  std::mt19937_64& rng_;
  std::uniform_int_distribution<std::size_t> pick_;
  std::size_t gt_;
  std::size_t gt_gap_;
  std::size_t spacing_;
  std::vector<std::size_t> used_;
};

}  // namespace detail

inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n_tech = spec.n_techniques;
  const std::size_t nq = spec.queries;
  const std::size_t nd = spec.database_size;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthData out;
  out.failed.assign(n_tech, std::vector<bool>(nq, false));
  for (std::size_t n = 0; n < spec.failure_schedule.size(); ++n) {
    for (const auto& r : spec.failure_schedule[n]) {
      for (std::size_t q = r.begin; q < r.end; ++q) out.failed[n][q] = true;
    }
  }

  std::vector<double> data(n_tech * nq * nd, 0.0);
  std::vector<std::size_t> drifting;
  const std::size_t gt_gap = std::max(2 * spec.r_window + 2, spec.gt_tolerance + 1);
  for (std::size_t q = 0; q < nq; ++q) {
    if (spec.drift_period && q % *spec.drift_period == 0) {
      std::vector<std::size_t> order(n_tech);
      for (std::size_t i = 0; i < n_tech; ++i) order[i] = i;
      for (std::size_t i = 0; i < spec.drift_failures; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_tech - 1);
        std::swap(order[i], order[pick(rng)]);
      }
      drifting.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.drift_failures));
    }
    for (std::size_t n : drifting) out.failed[n][q] = true;

    const std::size_t gt = q * nd / nq;
    out.gt_index.push_back(gt);
    detail::LocationSampler locations(rng, nd, gt, gt_gap, 2 * spec.r_window);
    const std::size_t shared = spec.distractors > 0 ? locations.draw() : 0;

    for (std::size_t n = 0; n < n_tech; ++n) {
      double* v = data.data() + (n * nq + q) * nd;
      for (std::size_t i = 0; i < nd; ++i) v[i] = unit(rng) * spec.noise_sigma;
      if (!out.failed[n][q]) v[gt] += spec.peak_strength[n];
      for (std::size_t j = 0; j < spec.distractors; ++j) {
        const bool use_shared = j == 0 && unit(rng) < spec.alias_correlation;
        const std::size_t loc = use_shared ? shared : locations.draw();
        v[loc] += spec.alias_strength[n];
      }
      for (std::size_t i = 0; i < nd; ++i) v[i] = static_cast<double>(static_cast<float>(v[i]));
    }
  }
  out.tensor = SimilarityTensor(spec.resolved_names(), nq, nd, std::move(data));
  out.ground_truth = GroundTruth::from_indices(out.gt_index, spec.gt_tolerance, nd);
  return out;
}

/// Four techniques with quarter-shifted failure halves: A and B fail on
/// complementary halves of the traverse, C and D (stronger distractors) on
/// halves offset by a quarter, so every query has exactly two working
/// techniques. All first distractors share one location per query, which
/// makes plain summation lock onto it.
inline SynthSpec disjoint_failure_fixture(std::uint64_t seed = 42) {
  SynthSpec s;
  s.names = {"A", "B", "C", "D"};
  s.n_techniques = 4;
  s.queries = 200;
  s.database_size = 100;
  s.peak_strength = {1.0, 1.0, 1.0, 1.0};
  s.alias_strength = {0.3, 0.3, 0.4, 0.4};
  s.distractors = 2;
  s.alias_correlation = 1.0;
  s.noise_sigma = 0.02;
  s.failure_schedule = {{{0, 100}}, {{100, 200}}, {{50, 150}}, {{0, 50}, {150, 200}}};
  s.r_window = 2;
  s.seed = seed;
  return s;
}

/// Same ensemble without a fixed schedule; every `drift_period` queries two
/// random techniques start failing.
inline SynthSpec drifting_fixture(std::uint64_t seed = 42) {
  SynthSpec s = disjoint_failure_fixture(seed);
  s.queries = 500;
  s.failure_schedule.clear();
  s.drift_period = 20;
  s.drift_failures = 2;
  return s;
}

namespace detail {

inline std::vector<double> per_technique(const nlohmann::json& j, std::size_t n,
                                         const char* field) {
  if (j.is_number()) return std::vector<double>(n, j.get<double>());
  if (j.is_array()) return j.get<std::vector<double>>();
  throw Error(ErrorCode::kInvalidSpec, std::string(field) + " must be a number or an array",
              field);
}

}  // namespace detail

inline SynthSpec spec_from_json(const nlohmann::json& j) {
  try {
    SynthSpec s;
    s.n_techniques = j.at("n_techniques").get<std::size_t>();
    s.queries = j.at("queries").get<std::size_t>();
    s.database_size = j.at("database_size").get<std::size_t>();
    if (j.contains("names")) s.names = j["names"].get<std::vector<std::string>>();
    s.peak_strength = detail::per_technique(j.value("peak_strength", nlohmann::json(1.0)),
                                            s.n_techniques, "peak_strength");
    s.alias_strength = detail::per_technique(j.value("alias_strength", nlohmann::json(0.0)),
                                             s.n_techniques, "alias_strength");
    s.distractors = j.value("distractors", std::size_t{1});
    s.alias_correlation = j.value("alias_correlation", 0.0);
    s.noise_sigma = j.value("noise_sigma", 0.0);
    if (j.contains("failure_schedule")) {
      for (const auto& ranges : j["failure_schedule"]) {
        std::vector<QueryRange> rs;
        for (const auto& r : ranges) rs.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
        s.failure_schedule.push_back(std::move(rs));
      }
    }
    if (j.contains("drift_period") && !j["drift_period"].is_null()) {
      s.drift_period = j["drift_period"].get<std::size_t>();
    }
    s.drift_failures = j.value("drift_failures", std::size_t{0});
    s.r_window = j.value("r_window", std::size_t{0});
    s.gt_tolerance = j.value("gt_tolerance", std::size_t{0});
    s.seed = j.value("seed", std::uint64_t{42});
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidSpec, std::string("malformed synth spec: ") + e.what());
  }
}

inline nlohmann::json spec_to_json(const SynthSpec& s) {
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& ranges : s.failure_schedule) {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : ranges) rs.push_back({r.begin, r.end});
    schedule.push_back(rs);
  }
  nlohmann::json j = {{"names", s.resolved_names()},
                      {"n_techniques", s.n_techniques},
                      {"queries", s.queries},
                      {"database_size", s.database_size},
                      {"peak_strength", s.peak_strength},
                      {"alias_strength", s.alias_strength},
                      {"distractors", s.distractors},
                      {"alias_correlation", s.alias_correlation},
                      {"noise_sigma", s.noise_sigma},
                      {"failure_schedule", schedule},
                      {"drift_failures", s.drift_failures},
                      {"r_window", s.r_window},
                      {"gt_tolerance", s.gt_tolerance},
                      {"seed", s.seed}};
  j["drift_period"] = s.drift_period ? nlohmann::json(*s.drift_period) : nlohmann::json();
  return j;
}

}  // namespace dynfuse

#endif  // DYNFUSE_SYNTH_HPP
