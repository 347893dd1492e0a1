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


// Seeded randomized checks of invariants that hold for every input.

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "dynfuse/dynfuse.hpp"
#include "oracles.hpp"

namespace dynfuse {
namespace {

namespace fs = std::filesystem;
using V = std::vector<double>;

V random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  V v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST(Property, MinMaxIsAffineInvariantAndIdempotent) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 500; ++trial) {
    const V v = random_vector(rng, 2 + trial % 40);
    const double a = scale(rng), b = shift(rng);
    V w(v.size());
    std::transform(v.begin(), v.end(), w.begin(), [&](double x) { return a * x + b; });
    const auto nv = minmax_normalize(v);
    const auto nw = minmax_normalize(w);
    const auto again = minmax_normalize(nv.values);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(nv.values[i], nw.values[i], 1e-9);
      EXPECT_NEAR(again.values[i], nv.values[i], 1e-15);
      EXPECT_GE(nv.values[i], 0.0);
      EXPECT_LE(nv.values[i], 1.0);
    }
    EXPECT_EQ(*std::max_element(nv.values.begin(), nv.values.end()), 1.0);
    EXPECT_EQ(*std::min_element(nv.values.begin(), nv.values.end()), 0.0);
  }
}

TEST(Property, ZScorePreservesArgmax) {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 500; ++trial) {
    const V v = random_vector(rng, 2 + trial % 50);
    EXPECT_EQ(argmax_lowest_index(zscore_normalize(v).values), argmax_lowest_index(v));
  }
}

TEST(Property, CosineIgnoresRowScale) {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f), s(0.1f, 10.0f);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix q, db;
    q.meta = {4, 6, MatrixRole::kQuery, "t"};
    db.meta = {7, 6, MatrixRole::kDatabase, "t"};
    for (int i = 0; i < 24; ++i) q.data.push_back(u(rng));
    for (int i = 0; i < 42; ++i) db.data.push_back(u(rng));
    Matrix q2 = q;
    for (std::size_t r = 0; r < 4; ++r) {
      const float k = s(rng);
      for (std::size_t c = 0; c < 6; ++c) q2.data[r * 6 + c] *= k;
    }
    const Matrix a = compute_similarity(q, db, Metric::kCosine);
    const Matrix b = compute_similarity(q2, db, Metric::kCosine);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      EXPECT_NEAR(a.data[i], b.data[i], 1e-5);
      EXPECT_LE(std::abs(a.data[i]), 1.0f + 1e-6f);
    }
  }
}

TEST(Property, MatrixRoundTripIsBitExact) {
  std::mt19937_64 rng(104);
  const fs::path dir = fs::temp_directory_path() / "dynfuse_property_roundtrip";
  fs::create_directories(dir);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m;
    m.meta = {1 + static_cast<std::size_t>(trial % 5), 1 + static_cast<std::size_t>(trial % 7),
              MatrixRole::kSimilarity, "t"};
    for (std::size_t i = 0; i < m.meta.rows * m.meta.cols; ++i) {
      float f;
      do {
        f = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
      } while (!std::isfinite(f));
      m.data.push_back(f);
    }
    m.data[0] = std::numeric_limits<float>::denorm_min();
    write_matrix(dir / "m.f32", m);
    const Matrix back = load_matrix(dir / "m.f32");
    ASSERT_EQ(back.data.size(), m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data[i]), std::bit_cast<std::uint32_t>(m.data[i]));
    }
  }
  fs::remove_all(dir);
}

TEST(Property, SubsetEnumerationIsCompleteAndOrdered) {
  for (std::size_t n = 2; n <= 12; ++n) {
    const auto subsets = enumerate_subsets(n, 2, n);
    ASSERT_EQ(subsets.size(), (std::size_t{1} << n) - n - 1);
    std::vector<Subset> reference;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (std::popcount(mask) >= 2) reference.push_back(oracle::members(mask));
    }
    std::sort(reference.begin(), reference.end(), [](const Subset& a, const Subset& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    EXPECT_EQ(subsets, reference) << "n=" << n;
  }
}

TEST(Property, SelectedSubsetIsOptimal) {
  std::mt19937_64 rng(105);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = oracle::random_tensor(rng, 2 + trial % 5, 1, 20, false);
    std::vector<NormalizedVector> slices;
    for (std::size_t n = 0; n < t.techniques(); ++n) slices.push_back(minmax_normalize(t.slice(n, 0)));
    FusionConfig config;
    config.r_window = static_cast<std::size_t>(trial % 4);
    const auto best = select_best_subset(slices, config);
    for (const auto& s : enumerate_subsets(t.techniques(), 2, t.techniques())) {
      EXPECT_GE(best.score, ratio_score(fuse_subset(slices, s), config.r_window, config.epsilon));
    }
  }
}

TEST(Property, FusedMatchIsArgmaxOfNormalizedValues) {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> w(0.1, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = oracle::random_tensor(rng, 3, 1, 15, false);
    std::vector<NormalizedVector> slices;
    for (std::size_t n = 0; n < 3; ++n) slices.push_back(minmax_normalize(t.slice(n, 0)));
    const V weights = {w(rng), w(rng), w(rng)};
    const auto m = weighted_fuse_and_match({0, 1, 2}, weights, slices);
    EXPECT_EQ(m.match_index, argmax_lowest_index(m.values));
  }
}

TEST(Property, WorkerCountDoesNotChangeResults) {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = oracle::random_tensor(rng, 5, 37, 25, trial % 3 == 0);
    FusionConfig config;
    config.r_window = 1;
    config.frame_separation = 1 + static_cast<std::size_t>(trial % 6);
    auto run_all = [&](std::size_t workers) {
      EngineOptions o;
      o.workers = workers;
      std::string out;
      out += result_to_json(run_dyn_mpf(t, config, o)).dump();
      out += result_to_json(run_full_mpf(t, config, o)).dump();
      out += result_to_json(run_random_pair(t, config, o)).dump();
      out += result_to_json(run_hier_mpf(t, config, HierParams{}, o)).dump();
      out += result_to_json(run_static_subset(t, config, {1, 3}, o)).dump();
      return out;
    };
    const std::string serial = run_all(1);
    EXPECT_EQ(run_all(3), serial);
    EXPECT_EQ(run_all(8), serial);
  }
}

TEST(Property, RecallIsMonotoneInK) {
  std::mt19937_64 rng(108);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = oracle::random_tensor(rng, 4, 30, 20, false);
    std::vector<std::size_t> idx;
    for (std::size_t q = 0; q < 30; ++q) idx.push_back(rng() % 20);
    const auto gt = GroundTruth::from_indices(idx, trial % 2, 20);
    EngineOptions o;
    o.ranking_depth = 20;
    const std::size_t ks[] = {1, 2, 3, 5, 10, 20};
    const auto rep = recall_at_k(run_dyn_mpf(t, FusionConfig{}, o), gt, ks);
    double prev = 0.0;
    for (const auto& [k, r] : rep.recall_at) {
      EXPECT_GE(r, prev);
      prev = r;
    }
    EXPECT_EQ(rep.recall_at.at(20), 1.0);
  }
}

TEST(Property, RecallIgnoresDatabaseOrder) {
  std::mt19937_64 rng(109);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4, q = 25, d = 30;
    const auto t = oracle::random_tensor(rng, n, q, d, false);
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    // New position perm[i] holds old index i.
    std::vector<double> data(t.data().size());
    for (std::size_t m = 0; m < n; ++m) {
      for (std::size_t qi = 0; qi < q; ++qi) {
        for (std::size_t i = 0; i < d; ++i) {
          data[(m * q + qi) * d + perm[i]] = t.data()[(m * q + qi) * d + i];
        }
      }
    }
    const SimilarityTensor u(t.names(), q, d, std::move(data));
    GroundTruth gt, gu;
    for (std::size_t qi = 0; qi < q; ++qi) {
      const std::size_t g = rng() % d;
      gt.acceptable.push_back({g});
      gu.acceptable.push_back({perm[g]});
    }
    const std::size_t ks[] = {1, 3, 5};
    EngineOptions o;
    o.ranking_depth = 5;
    FusionConfig config;  // r_window 0: the exclusion window is position-free
    const auto a = recall_at_k(run_dyn_mpf(t, config, o), gt, ks);
    const auto b = recall_at_k(run_dyn_mpf(u, config, o), gu, ks);
    EXPECT_EQ(a.recall_at, b.recall_at);
    const auto fa = recall_at_k(run_full_mpf(t, config, o), gt, ks);
    const auto fb = recall_at_k(run_full_mpf(u, config, o), gu, ks);
    EXPECT_EQ(fa.recall_at, fb.recall_at);
  }
}

TEST(Property, RandomPairIsUniform) {
  std::mt19937_64 rng(110);
  const std::size_t queries = 10000;
  const auto t = oracle::random_tensor(rng, 5, queries, 3, false);
  const auto r = run_random_pair(t, FusionConfig{});
  std::map<Subset, std::size_t> counts;
  for (const auto& rec : r.records) ++counts[rec.subset];
  ASSERT_EQ(counts.size(), 10u);
  const double expected = static_cast<double>(queries) / 10.0;
  double chi2 = 0.0;
  for (const auto& [s, c] : counts) {
    const double diff = static_cast<double>(c) - expected;
    chi2 += diff * diff / expected;
  }
  // 9 degrees of freedom, p = 0.001
  EXPECT_LT(chi2, 27.877);
}

TEST(Property, GeneratedPeaksSitAtGroundTruth) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto spec = disjoint_failure_fixture(seed);
    spec.failure_schedule.clear();
    const auto data = generate(spec);
    for (std::size_t q = 0; q < spec.queries; ++q) {
      for (std::size_t n = 0; n < 4; ++n) {
        EXPECT_EQ(oracle::argmax(oracle::query_slices(data.tensor, q)[n]), data.gt_index[q]);
      }
    }
  }
}

}  // namespace
}  // namespace dynfuse
