// Copyright 2026 The Authors.
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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "eigen_oracle.hpp"
#include "support.hpp"
#include "worthiness/ranking.hpp"

namespace worthiness::ranking {
namespace {

Matrix random_positive(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 5.0);
  Matrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

TEST(Smooth, HandValues) {
  ComparisonMatrix a({"p", "q", "r"});
  a.at(0, 1) = 10;
  a.at(1, 0) = 5;
  a.at(0, 2) = 25;
  const auto b = smooth_dominance(a, 1.0);
  EXPECT_NEAR(b(0, 1), 11.0 / 6.0, 1e-15);
  EXPECT_NEAR(b(1, 0), 6.0 / 11.0, 1e-15);
  EXPECT_DOUBLE_EQ(b(0, 2), 26.0);
  EXPECT_DOUBLE_EQ(b(1, 2), 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(b(i, i), 1.0);
}

TEST(Smooth, RejectsNonPositiveEpsilon) {
  ComparisonMatrix a({"p", "q"});
  EXPECT_ERROR_KIND(smooth_dominance(a, 0.0), ErrorKind::kInvalidValue);
}

TEST(Perron, UniformFixedPoint) {
  const auto r = perron_rank(Matrix(3, 1.0));
  ASSERT_EQ(r.weights.size(), 3u);
  for (double w : r.weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
}

TEST(Perron, TwoByTwoClosedForm) {
  Matrix b(2, 1.0);
  b(0, 1) = 3.0;
  b(1, 0) = 1.0 / 3.0;
  const auto r = perron_rank(b);
  EXPECT_NEAR(r.weights[0], 0.75, 1e-10);
  EXPECT_NEAR(r.weights[1], 0.25, 1e-10);
}

TEST(Perron, MatchesEigenOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 8;
    const auto b = random_positive(rng, n);
    const auto r = perron_rank(b);
    const auto oracle = testing::perron_oracle(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(r.weights[i], oracle[i], 1e-8) << "n=" << n;
      EXPECT_GT(r.weights[i], 0.0);
      sum += r.weights[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LT(r.residual, kDefaultTolerance);
  }
}

TEST(Perron, FixedPointResidual) {
  std::mt19937_64 rng(3);
  const auto b = random_positive(rng, 6);
  const auto r = perron_rank(b, 1e-12);
  std::vector<double> br(6, 0.0);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) br[i] += b(i, j) * r.weights[j];
  const double s = std::accumulate(br.begin(), br.end(), 0.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_LT(std::fabs(br[i] / s - r.weights[i]), 1e-12);
}

TEST(Perron, NoConvergenceCarriesIterate) {
  std::mt19937_64 rng(5);
  const auto b = random_positive(rng, 5);
  try {
    perron_rank(b, 1e-14, 1);
    FAIL() << "no error";
  } catch (const NoConvergence& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoConvergence);
    EXPECT_EQ(e.last().weights.size(), 5u);
    EXPECT_EQ(e.last().iterations, 1u);
    EXPECT_GT(e.last().residual, 0.0);
  }
}

TEST(Perron, RejectsNonPositive) {
  Matrix b(2, 1.0);
  b(0, 1) = 0.0;
  EXPECT_ERROR_KIND(perron_rank(b), ErrorKind::kInvalidValue);
  EXPECT_ERROR_KIND(perron_rank(Matrix(2, 1.0), 0.0), ErrorKind::kInvalidValue);
}

TEST(Perron, ScaleInvariant) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 6;
    auto b = random_positive(rng, n);
    const auto base = perron_rank(b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b(i, j) *= 37.5;
    const auto scaled = perron_rank(b);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(scaled.weights[i], base.weights[i], 1e-9);
  }
}

TEST(Perron, PermutationEquivariant) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + trial % 6;
    const auto b = random_positive(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pb(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) pb(i, j) = b(perm[i], perm[j]);
    const auto r = perron_rank(b);
    const auto pr = perron_rank(pb);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(pr.weights[i], r.weights[perm[i]], 1e-9);
  }
}

TEST(Perron, TwoModelsLargerDominanceWins) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> count(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    ComparisonMatrix a({"u", "v"});
    a.at(0, 1) = count(rng);
    a.at(1, 0) = count(rng);
    const auto b = smooth_dominance(a);
    const auto r = perron_rank(b);
    if (b(0, 1) > b(1, 0)) {
      EXPECT_GT(r.weights[0], r.weights[1]);
    } else if (b(0, 1) < b(1, 0)) {
      EXPECT_LT(r.weights[0], r.weights[1]);
    }
  }
}

TEST(Ranks, FromWeights) {
  EXPECT_EQ(ranks_from_weights({0.2, 0.5, 0.3}), (std::vector<std::size_t>{3, 1, 2}));
  EXPECT_EQ(ranks_from_weights({0.5, 0.5}), (std::vector<std::size_t>{1, 2}));
}

TEST(MatrixCsv, RoundTrip) {
  ComparisonMatrix a({"m1", "m2", "m3"});
  a.at(0, 1) = 4;
  a.at(2, 0) = 7;
  const auto text = format_matrix_csv(a);
  EXPECT_EQ(text.substr(0, text.find('\n')), "model,m1,m2,m3");
  EXPECT_EQ(parse_matrix_csv(text), a);
  EXPECT_EQ(a.total(), 11u);
}

TEST(MatrixCsv, NonZeroDiagonalRejected) {
  EXPECT_ANY_THROW(parse_matrix_csv("model,a,b\na,1,0\nb,0,0\n"));
  EXPECT_ANY_THROW(parse_matrix_csv("model,a,b\na,0,-1\nb,0,0\n"));
}

TEST(RankingCsv, Format) {
  RankingResult r;
  r.weights = {0.25, 0.75};
  EXPECT_EQ(format_ranking_csv({"a", "b"}, r), "model_id,weight,rank\na,0.25,2\nb,0.75,1\n");
}

}  // namespace
}  // namespace worthiness::ranking
