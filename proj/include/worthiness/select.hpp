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

// Subset selection under a labeling budget. The sampling-worthiness selector
// greedily maximizes difficulty plus lambda-weighted diversity, where
// diversity is the mean squared distance between content logits. The
// remaining selectors are the active-learning baselines it is compared with.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "worthiness/failnet.hpp"
#include "worthiness/ingest.hpp"

namespace worthiness::select {

inline constexpr double kDefaultWorthinessLambda = 1e-6;

struct SelectionConfig {
  std::size_t budget = 100;
  double lambda = kDefaultWorthinessLambda;
  std::uint64_t seed = 0;
};

struct SelectionStep {
  ImageId id;
  double difficulty = 0.0;
  double diversity_gain = 0.0;
  double objective = 0.0;

  bool operator==(const SelectionStep&) const = default;
};

struct SelectionResult {
  std::string selector;
  std::vector<SelectionStep> steps;

  std::vector<ImageId> ids() const;
  bool operator==(const SelectionResult&) const = default;
};

struct EvaluationReport {
  double srcc_selected = 0.0;
  double srcc_rest = 0.0;
  std::size_t selected_size = 0;
  std::size_t pool_size = 0;
};

// Vector space used by the geometric selectors.
enum class Representation { kLogits, kStages };

std::span<const double> logit_of(const FeatureStore& features, const ImageId& id);
std::vector<double> representation_of(const FeatureRecord& record, Representation rep);

double squared_distance(std::span<const double> a, std::span<const double> b);

// (1/|S|^2) * sum over ordered pairs (self-pairs included) of squared logit
// distance.
double diversity_of_set(const std::vector<ImageId>& ids, const FeatureStore& features);

// Greedy difficulty + diversity selection shared by every difficulty-based
// selector. Step 1 takes the most difficult image; step k >= 2 maximizes
// difficulty(x) + lambda / (k - 1) * sum_j ||logit(x) - logit(x_j)||^2.
// Ties go to the smallest id. `features` may be null when lambda == 0.
SelectionResult greedy_select(const std::map<ImageId, double>& difficulty,
                              const FeatureStore* features, std::size_t budget, double lambda,
                              std::string selector);

SelectionResult greedy_worthiness_select(const std::vector<ImageId>& pool,
                                         const failnet::FailureNet& net,
                                         const FeatureStore& features,
                                         const SelectionConfig& config);

SelectionResult random_select(const std::vector<ImageId>& pool, const SelectionConfig& config);

// Population variance of ensemble members as difficulty. With lambda > 0 the
// diversity term is interleaved greedily (features required).
SelectionResult variance_select(const EnsembleTable& ensemble, const std::vector<ImageId>& pool,
                                const SelectionConfig& config, const FeatureStore* features,
                                double lambda, std::string selector = "variance");

struct DropoutHead {
  std::vector<double> weights;  // one per logit coordinate
  double bias = 0.0;
};

DropoutHead parse_dropout_head(std::string_view json_text);
std::string format_dropout_head(const DropoutHead& head);

// Each member masks logit coordinates with Bernoulli(1 - p), rescales the
// survivors by 1 / (1 - p) and evaluates the linear head.
EnsembleTable ensemble_from_dropout(const FeatureStore& features, const std::vector<ImageId>& ids,
                                    const DropoutHead& head, std::size_t members, double p,
                                    std::uint64_t seed);

// k-center greedy: first the point farthest from the pool centroid, then the
// point with the largest distance to its nearest selected point.
SelectionResult coreset_select(const std::vector<ImageId>& pool, const FeatureStore& features,
                               const SelectionConfig& config,
                               Representation rep = Representation::kLogits);

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
};

// Lloyd iterations from a k-means++ seeding. Nearest-centroid ties go to the
// lower cluster index; empty clusters keep their previous centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, const KMeansOptions& options = {});

// Representativeness-diversity: at step i cluster the pool into i groups and
// take the member nearest the centroid of the largest group that holds no
// selected image.
SelectionResult rd_select(const std::vector<ImageId>& pool, const FeatureStore& features,
                          const SelectionConfig& config,
                          Representation rep = Representation::kLogits,
                          const KMeansOptions& options = {});

// Maximizes the quality model's own uncertainty estimate.
SelectionResult uncertainty_select(const ScoreTable& scores, const ModelId& model,
                                   const std::vector<ImageId>& pool, const SelectionConfig& config,
                                   const FeatureStore* features, double lambda);

// SRCC between scores and MOS on the selected set and on pool \ selected.
EvaluationReport evaluate_selection(const std::vector<ImageId>& selected,
                                    const std::vector<ImageId>& pool,
                                    const std::map<ImageId, double>& f_scores,
                                    const MosTable& mos);

// Ids by squared prediction error, largest first; id order on ties.
std::vector<ImageId> top_difficult(const std::map<ImageId, double>& f_scores, const MosTable& mos,
                                   std::size_t n);

std::string format_selection_csv(const SelectionResult& result);
SelectionResult parse_selection_csv(std::string_view text);

}  // namespace worthiness::select
