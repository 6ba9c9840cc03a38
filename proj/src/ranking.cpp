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

#include "worthiness/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "csv.hpp"

namespace worthiness::ranking {

ComparisonMatrix::ComparisonMatrix(std::vector<ModelId> model_ids)
    : models(std::move(model_ids)), counts(models.size() * models.size(), 0) {}

std::size_t ComparisonMatrix::index_of(const ModelId& model) const {
  auto it = std::find(models.begin(), models.end(), model);
  if (it == models.end()) {
    throw Error(ErrorKind::kSchemaError, "model " + model + " not in comparison matrix");
  }
  return static_cast<std::size_t>(it - models.begin());
}

std::uint64_t ComparisonMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Matrix smooth_dominance(const ComparisonMatrix& counts, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorKind::kInvalidValue, "smoothing epsilon must be positive");
  }
  const std::size_t m = counts.size();
  Matrix b(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      b(i, j) = (static_cast<double>(counts.at(i, j)) + epsilon) /
                (static_cast<double>(counts.at(j, i)) + epsilon);
    }
  }
  return b;
}

namespace {

// Returns B r / 1^T B r.
std::vector<double> normalized_image(const Matrix& b, const std::vector<double>& r) {
  const std::size_t m = b.size();
  std::vector<double> next(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += b(i, j) * r[j];
    next[i] = acc;
  }
  const double sum = std::accumulate(next.begin(), next.end(), 0.0);
  for (auto& v : next) v /= sum;
  return next;
}

}  // namespace

RankingResult perron_rank(const Matrix& dominance, double tol, std::size_t max_iter) {
  const std::size_t m = dominance.size();
  if (m == 0) throw Error(ErrorKind::kShapeError, "empty dominance matrix");
  if (!(tol > 0.0)) throw Error(ErrorKind::kInvalidValue, "tolerance must be positive");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = dominance(i, j);
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::kInvalidValue, "dominance matrix must be strictly positive");
      }
    }
  }

  RankingResult result;
  result.weights.assign(m, 1.0 / static_cast<double>(m));
  for (std::size_t it = 0; it < max_iter; ++it) {
    auto next = normalized_image(dominance, result.weights);
    double residual = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      residual = std::max(residual, std::abs(next[i] - result.weights[i]));
    }
    result.iterations = it;
    result.residual = residual;
    if (residual < tol) return result;
    result.weights = std::move(next);
  }
  result.iterations = max_iter;
  throw NoConvergence("power iteration did not reach tolerance in " +
                          std::to_string(max_iter) + " iterations",
                      result);
}

std::vector<std::size_t> ranks_from_weights(const std::vector<double>& weights) {
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::vector<std::size_t> ranks(weights.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

std::string format_matrix_csv(const ComparisonMatrix& matrix) {
  std::string out = "model";
  for (const auto& id : matrix.models) out += ',' + id;
  out += '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += matrix.models[i];
    for (std::size_t j = 0; j < matrix.size(); ++j) out += ',' + std::to_string(matrix.at(i, j));
    out += '\n';
  }
  return out;
}

ComparisonMatrix parse_matrix_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.empty()) throw Error(ErrorKind::kSchemaError, "empty matrix file");
  const auto header = csv::split(lines[0], ',');
  std::vector<ModelId> models(header.begin() + 1, header.end());
  std::set<ModelId> unique(models.begin(), models.end());
  if (unique.size() != models.size()) {
    throw Error(ErrorKind::kDuplicateEntry, "duplicate model id in matrix header");
  }
  if (lines.size() != models.size() + 1) {
    throw Error(ErrorKind::kSchemaError, "matrix must have one row per model");
  }
  ComparisonMatrix matrix(models);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto fields = csv::split(lines[i + 1], ',');
    if (fields.size() != models.size() + 1 || fields[0] != models[i]) {
      throw Error(ErrorKind::kSchemaError,
                  "row " + std::to_string(i + 1) + " must start with " + models[i] +
                      " and hold " + std::to_string(models.size()) + " counts");
    }
    for (std::size_t j = 0; j < models.size(); ++j) {
      const auto v = csv::parse_integer(fields[j + 1], i + 2, models[j]);
      if (v < 0) throw Error(ErrorKind::kInvalidValue, "negative count in matrix");
      if (i == j && v != 0) throw Error(ErrorKind::kInvalidValue, "matrix diagonal must be zero");
      matrix.at(i, j) = static_cast<std::uint64_t>(v);
    }
  }
  return matrix;
}

std::string format_ranking_csv(const std::vector<ModelId>& models, const RankingResult& result) {
  const auto ranks = ranks_from_weights(result.weights);
  std::string out = "model_id,weight,rank\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    out += models[i] + ',' + format_real(result.weights[i]) + ',' + std::to_string(ranks[i]) + '\n';
  }
  return out;
}

}  // namespace worthiness::ranking
