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


#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "dynfuse/fusion.hpp"
#include "oracles.hpp"

namespace dynfuse {
namespace {

using V = std::vector<double>;

std::vector<NormalizedVector> as_slices(const std::vector<V>& vs) {
  std::vector<NormalizedVector> out;
  for (const auto& v : vs) out.push_back({v, false});
  return out;
}

TEST(RatioScore, WindowExcludesNeighbours) {
  EXPECT_DOUBLE_EQ(ratio_score(V{0.1, 0.9, 0.3, 0.8}, 1, 1e-12), 0.9 / 0.8);
  EXPECT_DOUBLE_EQ(ratio_score(V{1.0, 0.0, 0.0, 0.0, 0.5}, 1, 1e-12), 2.0);
}

TEST(RatioScore, WindowCoveringEverythingThrows) {
  try {
    ratio_score(V{1.0, 0.0, 0.0}, 2, 1e-12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWindowCoversAll);
  }
}

TEST(RatioScore, DenominatorClampsToEpsilon) {
  EXPECT_DOUBLE_EQ(ratio_score(V{1.0, 0.0, 0.0}, 0, 1e-12), 1e12);
}

TEST(EnumerateSubsets, OrderedBySizeThenLexicographically) {
  const auto s = enumerate_subsets(3, 2, 3);
  EXPECT_EQ(s, (std::vector<Subset>{{0, 1}, {0, 2}, {1, 2}, {0, 1, 2}}));
}

TEST(EnumerateSubsets, TenTechniques) { EXPECT_EQ(enumerate_subsets(10, 2, 10).size(), 1013u); }

TEST(EnumerateSubsets, DegenerateTechniquesAreSkipped) {
  const std::size_t degenerate[] = {1};
  const auto s = enumerate_subsets(4, 2, 4, degenerate);
  EXPECT_EQ(s, (std::vector<Subset>{{0, 2}, {0, 3}, {2, 3}, {0, 2, 3}}));
}

TEST(EnumerateSubsets, BoundsAndShortfall) {
  EXPECT_THROW(enumerate_subsets(3, 1, 3), Error);
  EXPECT_THROW(enumerate_subsets(3, 3, 2), Error);
  EXPECT_THROW(enumerate_subsets(3, 2, 4), Error);
  const std::size_t degenerate[] = {0, 1};
  try {
    enumerate_subsets(3, 2, 3, degenerate);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewTechniques);
  }
}

TEST(EnumerateSubsets, SizeWindow) {
  // C(5,2) + C(5,3)
  EXPECT_EQ(enumerate_subsets(5, 2, 3).size(), 20u);
  EXPECT_EQ(enumerate_subsets(5, 5, 5), (std::vector<Subset>{{0, 1, 2, 3, 4}}));
}

TEST(FuseSubset, ElementWiseSum) {
  const auto slices = as_slices({{0, 1}, {1, 0}});
  EXPECT_EQ(fuse_subset(slices, {0, 1}), (V{1, 1}));
  const auto three = as_slices({{0, .5, 1}, {0, .5, 1}, {0, .5, 1}});
  EXPECT_EQ(fuse_subset(three, {0, 1, 2}), (V{0, 1.5, 3}));
  EXPECT_THROW(fuse_subset(three, {}), Error);
}

TEST(FuseSubset, MissingMemberThrows) {
  std::vector<NormalizedVector> slices(2);
  slices[0].values = {0, 1};
  EXPECT_THROW(fuse_subset(slices, {0, 1}), Error);
}

TEST(SelectBestSubset, PairWhoseSumAgreesOnSecondBest) {
  // Each technique peaks somewhere different; both rank index 2 second.
  const std::vector<V> raw = {{1.0, 0.0, 0.9, 0.0, 0.0, 0.0},
                              {0.0, 0.0, 0.9, 0.0, 0.0, 1.0},
                              {0.0, 1.0, 0.0, 0.0, 0.2, 0.0}};
  std::vector<NormalizedVector> slices;
  std::vector<oracle::Normalized> ref;
  for (const auto& v : raw) {
    slices.push_back(minmax_normalize(v));
    ref.push_back(oracle::minmax(v));
  }
  FusionConfig config;
  const auto expected = oracle::best_subset(ref, 0, config.epsilon, 2, 3, true);
  const auto got = select_best_subset(slices, config);
  ASSERT_TRUE(expected.has_value());
  EXPECT_EQ(got.subset, expected->subset);
  EXPECT_EQ(got.subset, (Subset{0, 1}));
  EXPECT_DOUBLE_EQ(got.score, 1.8 / 1.0);
  EXPECT_EQ(argmax_lowest_index(fuse_subset(slices, got.subset)), 2u);
}

TEST(SelectBestSubset, IdenticalTechniquesTieToFirstPair) {
  // Dyadic values keep every k-fold sum exact, so all subsets tie.
  const V v = {0.25, 0.5, 0.125, 1.0, 0.375};
  const auto slices = as_slices({v, v, v, v});
  FusionConfig config;
  EXPECT_EQ(select_best_subset(slices, config).subset, (Subset{0, 1}));
  config.tie_break = TieBreak::kLowestIndex;
  // {0,1} < {0,1,2} lexicographically as well
  EXPECT_EQ(select_best_subset(slices, config).subset, (Subset{0, 1}));
}

TEST(SelectBestSubset, TieBreakRulesDiffer) {
  // With r_window 0 the divisor clamps to epsilon: {0,2} and {0,1,2} both
  // score 2 / eps, {0,1} and {1,2} only 1 / eps.
  const auto slices = as_slices({{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}});
  FusionConfig config;
  EXPECT_EQ(select_best_subset(slices, config).subset, (Subset{0, 2}));
  config.tie_break = TieBreak::kLowestIndex;
  EXPECT_EQ(select_best_subset(slices, config).subset, (Subset{0, 1, 2}));
  EXPECT_TRUE(subset_precedes({0, 2}, {0, 1, 2}, TieBreak::kSmallestSubsetThenLexicographic));
  EXPECT_FALSE(subset_precedes({0, 2}, {0, 1, 2}, TieBreak::kLowestIndex));
}

TEST(SelectBestSubset, TwoTechniquesGiveThePair) {
  const auto slices = as_slices({{0.0, 1.0, 0.3}, {1.0, 0.0, 0.4}});
  EXPECT_EQ(select_best_subset(slices, FusionConfig{}).subset, (Subset{0, 1}));
}

TEST(SelectBestSubset, SkipsDegenerateAndReportsShortfall) {
  auto slices = as_slices({{0, 1, 0}, {0, 0, 0}, {0, 1, 0.5}});
  slices[1].degenerate = true;
  EXPECT_EQ(select_best_subset(slices, FusionConfig{}).subset, (Subset{0, 2}));
  slices[2].degenerate = true;
  try {
    select_best_subset(slices, FusionConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewTechniques);
  }
}

TEST(SelectBestSubset, AgreesWithBitmaskSearchUnderSizeLimits) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = oracle::random_tensor(rng, 5, 1, 12, trial % 5 == 0);
    std::vector<NormalizedVector> slices;
    std::vector<oracle::Normalized> ref;
    for (const auto& v : oracle::query_slices(t, 0)) {
      slices.push_back(minmax_normalize(v));
      ref.push_back(oracle::minmax(v));
    }
    FusionConfig config;
    config.r_window = 1;
    config.min_subset_size = 2 + static_cast<std::size_t>(trial % 2);
    config.max_subset_size = 3 + static_cast<std::size_t>(trial % 3);
    const auto expected = oracle::best_subset(ref, 1, config.epsilon, config.min_subset_size,
                                              *config.max_subset_size, true);
    if (!expected) {
      EXPECT_THROW(select_best_subset(slices, config), Error);
      continue;
    }
    const auto got = select_best_subset(slices, config);
    EXPECT_EQ(got.subset, expected->subset) << "trial " << trial;
    EXPECT_EQ(got.score, expected->score) << "trial " << trial;
  }
}

TEST(TechniqueWeights, SelfRatioScore) {
  const auto slices = as_slices({{0.2, 1.0, 0.1, 0.0}, {0.2, 1.0, 0.1, 0.0}, {1, 0, 0, 0}});
  FusionConfig config;
  const auto w = technique_weights(slices, {0, 1, 2}, config);
  EXPECT_DOUBLE_EQ(w[0], 5.0);
  EXPECT_EQ(w[0], w[1]);
  EXPECT_DOUBLE_EQ(w[2], 1.0 / 1e-12);
  config.weighting = Weighting::kUniform;
  EXPECT_EQ(technique_weights(slices, {0, 2}, config), (V{1.0, 1.0}));
}

TEST(WeightedFuseAndMatch, EqualWeightsMatchUnweightedArgmax) {
  const auto slices = as_slices({{0.1, 0.4, 1.0, 0.0}, {0.0, 1.0, 0.5, 0.3}});
  const V w = {2.5, 2.5};
  const auto m = weighted_fuse_and_match({0, 1}, w, slices);
  EXPECT_EQ(m.match_index, argmax_lowest_index(fuse_subset(slices, {0, 1})));
  EXPECT_EQ(m.match_index, argmax_lowest_index(m.values));
}

TEST(WeightedFuseAndMatch, ConfidentTechniqueDominates) {
  const auto slices = as_slices({{0.0, 0.1, 0.0, 1.0, 0.0}, {0.9, 1.0, 0.95, 0.97, 0.92}});
  const V w = {10.0, 0.1};
  EXPECT_EQ(weighted_fuse_and_match({0, 1}, w, slices).match_index, 3u);
}

TEST(WeightedFuseAndMatch, RecordsPreNormalizationStats) {
  const auto slices = as_slices({{0.0, 1.0}, {0.0, 1.0}});
  const V w = {1.0, 3.0};
  const auto m = weighted_fuse_and_match({0, 1}, w, slices);
  EXPECT_EQ(m.weighted_sum, (V{0.0, 4.0}));
  EXPECT_DOUBLE_EQ(m.stats.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.stats.stddev, std::sqrt(8.0));
  EXPECT_DOUBLE_EQ(m.values[1], 2.0 / std::sqrt(8.0));
  EXPECT_THROW(weighted_fuse_and_match({0, 1}, V{1.0}, slices), Error);
}

}  // namespace
}  // namespace dynfuse
