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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "worthiness/error.hpp"
#include "worthiness/ingest.hpp"

namespace worthiness::ranking {

// Dense row-major square matrix.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// a(i, j) counts how often model i's preferred image beat model j's.
struct ComparisonMatrix {
  std::vector<ModelId> models;
  std::vector<std::uint64_t> counts;  // row-major, models.size()^2

  explicit ComparisonMatrix(std::vector<ModelId> model_ids = {});

  std::size_t size() const { return models.size(); }
  std::uint64_t& at(std::size_t i, std::size_t j) { return counts[i * models.size() + j]; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return counts[i * models.size() + j]; }
  std::size_t index_of(const ModelId& model) const;
  std::uint64_t total() const;

  bool operator==(const ComparisonMatrix&) const = default;
};

struct RankingResult {
  std::vector<double> weights;
  std::size_t iterations = 0;
  double residual = 0.0;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& message, RankingResult last)
      : Error(ErrorKind::kNoConvergence, message), last_(std::move(last)) {}
  const RankingResult& last() const { return last_; }

 private:
  RankingResult last_;
};

inline constexpr double kDefaultEpsilon = 1.0;
inline constexpr double kDefaultTolerance = 1e-10;
inline constexpr std::size_t kDefaultMaxIterations = 10000;

// b(i, j) = (a(i, j) + eps) / (a(j, i) + eps), b(i, i) = 1.
Matrix smooth_dominance(const ComparisonMatrix& counts, double epsilon = kDefaultEpsilon);

// Power iteration from the uniform vector with sum normalization. Returns the
// first iterate r with max|B r / sum(B r) - r| < tol.
RankingResult perron_rank(const Matrix& dominance, double tol = kDefaultTolerance,
                          std::size_t max_iter = kDefaultMaxIterations);

// 1-based ranks, rank 1 for the largest weight; ties share the smaller model
// index order.
std::vector<std::size_t> ranks_from_weights(const std::vector<double>& weights);

// Square CSV: header "model,<id>,<id>,..." then one row per model.
std::string format_matrix_csv(const ComparisonMatrix& matrix);
ComparisonMatrix parse_matrix_csv(std::string_view text);

// model_id,weight,rank rows ordered by model.
std::string format_ranking_csv(const std::vector<ModelId>& models, const RankingResult& result);

}  // namespace worthiness::ranking
