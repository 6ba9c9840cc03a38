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

#include "worthiness/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "csv.hpp"
#include "json.hpp"
#include "worthiness/error.hpp"
#include "worthiness/metrics.hpp"

namespace worthiness::select {

namespace {

std::vector<ImageId> sorted_pool(const std::vector<ImageId>& pool, std::size_t budget) {
  if (pool.empty()) throw Error(ErrorKind::kEmptySelectionPool, "selection pool is empty");
  if (budget == 0) throw Error(ErrorKind::kInvalidValue, "budget must be at least 1");
  std::vector<ImageId> ids = pool;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorKind::kDuplicateEntry, "selection pool lists an image twice");
  }
  if (budget > ids.size()) {
    throw Error(ErrorKind::kBudgetExceedsPool, "budget " + std::to_string(budget) +
                                                   " exceeds pool of " +
                                                   std::to_string(ids.size()));
  }
  return ids;
}

std::vector<double> centroid_of(const std::vector<std::vector<double>>& points) {
  std::vector<double> c(points.front().size(), 0.0);
  for (const auto& p : points) {
    for (std::size_t d = 0; d < c.size(); ++d) c[d] += p[d];
  }
  for (auto& v : c) v /= static_cast<double>(points.size());
  return c;
}

}  // namespace

std::vector<ImageId> SelectionResult::ids() const {
  std::vector<ImageId> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.id);
  return out;
}

std::span<const double> logit_of(const FeatureStore& features, const ImageId& id) {
  return features.at(id).logit;
}

std::vector<double> representation_of(const FeatureRecord& record, Representation rep) {
  return rep == Representation::kLogits ? record.logit : record.concatenated_stages();
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kDimensionError, "vectors differ in width");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double diversity_of_set(const std::vector<ImageId>& ids, const FeatureStore& features) {
  if (ids.empty()) return 0.0;
  std::vector<std::span<const double>> logits;
  logits.reserve(ids.size());
  for (const auto& id : ids) logits.push_back(logit_of(features, id));
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    for (std::size_t j = 0; j < logits.size(); ++j) {
      if (i != j) total += squared_distance(logits[i], logits[j]);
    }
  }
  const double n = static_cast<double>(ids.size());
  return total / (n * n);
}

SelectionResult greedy_select(const std::map<ImageId, double>& difficulty,
                              const FeatureStore* features, std::size_t budget, double lambda,
                              std::string selector) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::kInvalidValue, "lambda must be a nonnegative real");
  }
  std::vector<ImageId> ids;
  ids.reserve(difficulty.size());
  for (const auto& [id, _] : difficulty) ids.push_back(id);
  ids = sorted_pool(ids, budget);
  const bool diverse = lambda > 0.0;
  if (diverse && features == nullptr) {
    throw Error(ErrorKind::kInvalidValue, "diversity needs logit features");
  }

  const std::size_t n = ids.size();
  std::vector<double> diff(n);
  std::vector<std::span<const double>> logits(diverse ? n : 0);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = difficulty.at(ids[i]);
    if (!std::isfinite(diff[i])) throw Error(ErrorKind::kInvalidValue, "non-finite difficulty");
    if (diverse) logits[i] = logit_of(*features, ids[i]);
  }

  // Running sum of squared distances to the selected images, accumulated in
  // selection order.
  std::vector<double> distance_sum(n, 0.0);
  std::vector<bool> taken(n, false);
  SelectionResult result;
  result.selector = std::move(selector);
  for (std::size_t k = 1; k <= budget; ++k) {
    std::size_t best = n;
    double best_objective = 0.0;
    double best_gain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double gain =
          (k == 1 || !diverse) ? 0.0 : (lambda / static_cast<double>(k - 1)) * distance_sum[i];
      const double objective = diff[i] + gain;
      if (best == n || objective > best_objective) {
        best = i;
        best_objective = objective;
        best_gain = gain;
      }
    }
    taken[best] = true;
    result.steps.push_back(SelectionStep{ids[best], diff[best], best_gain, best_objective});
    if (diverse) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) distance_sum[i] += squared_distance(logits[i], logits[best]);
      }
    }
  }
  return result;
}

SelectionResult greedy_worthiness_select(const std::vector<ImageId>& pool,
                                         const failnet::FailureNet& net,
                                         const FeatureStore& features,
                                         const SelectionConfig& config) {
  const auto ids = sorted_pool(pool, config.budget);
  std::map<ImageId, double> difficulty;
  for (const auto& id : ids) difficulty.emplace(id, net.forward(features.at(id)));
  return greedy_select(difficulty, &features, config.budget, config.lambda, "worthiness");
}

SelectionResult random_select(const std::vector<ImageId>& pool, const SelectionConfig& config) {
  auto ids = sorted_pool(pool, config.budget);
  std::mt19937_64 rng(config.seed);
  // Partial Fisher-Yates over the sorted pool.
  for (std::size_t i = 0; i < config.budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  SelectionResult result;
  result.selector = "random";
  for (std::size_t i = 0; i < config.budget; ++i) result.steps.push_back(SelectionStep{ids[i]});
  return result;
}

SelectionResult variance_select(const EnsembleTable& ensemble, const std::vector<ImageId>& pool,
                                const SelectionConfig& config, const FeatureStore* features,
                                double lambda, std::string selector) {
  const auto ids = sorted_pool(pool, config.budget);
  const auto by_image = ensemble.members_by_image();
  std::map<ImageId, double> difficulty;
  std::size_t member_count = 0;
  for (const auto& id : ids) {
    auto it = by_image.find(id);
    if (it == by_image.end()) throw Error(ErrorKind::kUnknownImage, "no ensemble scores for " + id);
    const auto& members = it->second;
    if (member_count == 0) member_count = members.size();
    if (members.size() != member_count || members.size() < 2) {
      throw Error(ErrorKind::kRaggedEnsemble,
                  "image " + id + " has " + std::to_string(members.size()) +
                      " ensemble members, expected " + std::to_string(member_count) +
                      " (at least 2)");
    }
    const double mean =
        std::accumulate(members.begin(), members.end(), 0.0) / static_cast<double>(members.size());
    double var = 0.0;
    for (const double m : members) var += (m - mean) * (m - mean);
    difficulty.emplace(id, var / static_cast<double>(members.size()));
  }
  return greedy_select(difficulty, features, config.budget, lambda, std::move(selector));
}

DropoutHead parse_dropout_head(std::string_view json_text) {
  DropoutHead head;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    head.weights = doc.at("weights").get<std::vector<double>>();
    head.bias = doc.value("bias", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("malformed dropout head: ") + e.what());
  }
  for (const double w : head.weights) {
    if (!std::isfinite(w)) throw Error(ErrorKind::kInvalidValue, "dropout head weight is not finite");
  }
  return head;
}

std::string format_dropout_head(const DropoutHead& head) {
  return nlohmann::json{{"weights", head.weights}, {"bias", head.bias}}.dump() + "\n";
}

EnsembleTable ensemble_from_dropout(const FeatureStore& features, const std::vector<ImageId>& ids,
                                    const DropoutHead& head, std::size_t members, double p,
                                    std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::kInvalidValue, "dropout rate must lie in [0, 1)");
  if (members == 0) throw Error(ErrorKind::kInvalidValue, "member count must be positive");
  if (head.weights.size() != features.logit_width) {
    throw Error(ErrorKind::kDimensionError,
                "head width " + std::to_string(head.weights.size()) + " differs from logit width " +
                    std::to_string(features.logit_width));
  }
  std::vector<ImageId> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t digits = std::to_string(members - 1).size();
  std::vector<std::string> member_ids;
  for (std::size_t m = 0; m < members; ++m) {
    auto n = std::to_string(m);
    member_ids.push_back("m" + std::string(digits - n.size(), '0') + n);
  }
  const double keep = 1.0 - p;
  const double scale = 1.0 / keep;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution survive(keep);
  EnsembleTable table;
  for (const auto& id : sorted) {
    const auto& logit = features.at(id).logit;
    if (logit.size() != head.weights.size()) {
      throw Error(ErrorKind::kDimensionError, "logit width mismatch for image " + id);
    }
    for (std::size_t m = 0; m < members; ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < logit.size(); ++i) {
        if (survive(rng)) acc += head.weights[i] * (logit[i] * scale);
      }
      table.insert(id, member_ids[m], acc + head.bias);
    }
  }
  return table;
}

SelectionResult coreset_select(const std::vector<ImageId>& pool, const FeatureStore& features,
                               const SelectionConfig& config, Representation rep) {
  const auto ids = sorted_pool(pool, config.budget);
  const std::size_t n = ids.size();
  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (const auto& id : ids) points.push_back(representation_of(features.at(id), rep));
  const auto centroid = centroid_of(points);

  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(points[i], centroid);
  std::vector<bool> taken(n, false);
  SelectionResult result;
  result.selector = "coreset";
  for (std::size_t k = 0; k < config.budget; ++k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || nearest[i] > nearest[best]) best = i;
    }
    taken[best] = true;
    const double dist = std::sqrt(nearest[best]);
    result.steps.push_back(SelectionStep{ids[best], 0.0, dist, dist});
    // After the first pick, distances are to the selected set, not the centroid.
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = squared_distance(points[i], points[best]);
      nearest[i] = k == 0 ? d : std::min(nearest[i], d);
    }
  }
  return result;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, const KMeansOptions& options) {
  const std::size_t n = points.size();
  if (k == 0 || k > n) throw Error(ErrorKind::kInvalidValue, "k must lie in [1, n]");
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<std::size_t> chosen;
  std::vector<bool> is_center(n, false);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  chosen.push_back(first(rng));
  is_center[chosen.back()] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], points[chosen[0]]);
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += is_center[i] ? 0.0 : d2[i];
    std::size_t next = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (is_center[i] || d2[i] == 0.0) continue;
        next = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    } else {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (!is_center[i]) rest.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
      next = rest[pick(rng)];
    }
    chosen.push_back(next);
    is_center[next] = true;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], points[next]));
  }

  KMeansResult result;
  for (const auto idx : chosen) result.centroids.push_back(points[idx]);
  result.assignment.assign(n, 0);
  const std::size_t dim = points.front().size();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(points[i], result.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      result.assignment[i] = best;
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[result.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[result.assignment[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
      max_shift = std::max(max_shift, std::sqrt(squared_distance(sums[c], result.centroids[c])));
      result.centroids[c] = std::move(sums[c]);
    }
    result.iterations = iter + 1;
    if (max_shift < options.tolerance) break;
  }
  // Final assignment against the final centroids.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = squared_distance(points[i], result.centroids[0]);
    for (std::size_t c = 1; c < k; ++c) {
      const double d = squared_distance(points[i], result.centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    result.assignment[i] = best;
  }
  return result;
}

SelectionResult rd_select(const std::vector<ImageId>& pool, const FeatureStore& features,
                          const SelectionConfig& config, Representation rep,
                          const KMeansOptions& options) {
  const auto ids = sorted_pool(pool, config.budget);
  const std::size_t n = ids.size();
  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (const auto& id : ids) points.push_back(representation_of(features.at(id), rep));

  std::vector<bool> taken(n, false);
  SelectionResult result;
  result.selector = "rd";
  for (std::size_t i = 1; i <= config.budget; ++i) {
    const auto clusters = kmeans(points, i, config.seed + i, options);
    std::vector<std::size_t> size(i, 0);
    std::vector<bool> holds_selected(i, false);
    std::vector<std::size_t> first_member(i, n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto c = clusters.assignment[p];
      ++size[c];
      if (taken[p]) holds_selected[c] = true;
      first_member[c] = std::min(first_member[c], p);
    }
    // Largest eligible cluster; ties go to the cluster whose smallest member
    // id comes first.
    std::size_t best_cluster = i;
    for (std::size_t c = 0; c < i; ++c) {
      if (size[c] == 0 || holds_selected[c]) continue;
      if (best_cluster == i || size[c] > size[best_cluster] ||
          (size[c] == size[best_cluster] && first_member[c] < first_member[best_cluster])) {
        best_cluster = c;
      }
    }
    std::size_t pick = n;
    double pick_d = 0.0;
    if (best_cluster < i) {
      for (std::size_t p = 0; p < n; ++p) {
        if (clusters.assignment[p] != best_cluster) continue;
        const double d = squared_distance(points[p], clusters.centroids[best_cluster]);
        if (pick == n || d < pick_d) {
          pick = p;
          pick_d = d;
        }
      }
    } else {
      // Every nonempty cluster already holds a selected image (possible only
      // with coincident points); fall back to the first unselected id.
      for (std::size_t p = 0; p < n && pick == n; ++p) {
        if (!taken[p]) pick = p;
      }
    }
    taken[pick] = true;
    const double cluster_size = best_cluster < i ? static_cast<double>(size[best_cluster]) : 0.0;
    result.steps.push_back(SelectionStep{ids[pick], 0.0, cluster_size, cluster_size});
  }
  return result;
}

SelectionResult uncertainty_select(const ScoreTable& scores, const ModelId& model,
                                   const std::vector<ImageId>& pool, const SelectionConfig& config,
                                   const FeatureStore* features, double lambda) {
  const auto ids = sorted_pool(pool, config.budget);
  const auto sigma = scores.model_uncertainty(model);
  std::map<ImageId, double> difficulty;
  for (const auto& id : ids) {
    auto it = sigma.find(id);
    if (it == sigma.end()) {
      throw Error(ErrorKind::kSchemaError, "no uncertainty for image " + id + " under " + model);
    }
    difficulty.emplace(id, it->second);
  }
  return greedy_select(difficulty, features, config.budget, lambda, "uncertainty");
}

EvaluationReport evaluate_selection(const std::vector<ImageId>& selected,
                                    const std::vector<ImageId>& pool,
                                    const std::map<ImageId, double>& f_scores,
                                    const MosTable& mos) {
  const std::set<ImageId> chosen(selected.begin(), selected.end());
  const std::set<ImageId> pool_set(pool.begin(), pool.end());
  for (const auto& id : chosen) {
    if (!pool_set.count(id)) throw Error(ErrorKind::kUnknownImage, "selected image " + id + " is not in the pool");
  }
  auto score_of = [&](const ImageId& id) {
    auto it = f_scores.find(id);
    if (it == f_scores.end()) throw Error(ErrorKind::kUnknownImage, "no score for image " + id);
    return it->second;
  };
  std::vector<double> f_sel, m_sel, f_rest, m_rest;
  for (const auto& id : pool_set) {
    if (chosen.count(id)) {
      f_sel.push_back(score_of(id));
      m_sel.push_back(mos.at(id));
    } else {
      f_rest.push_back(score_of(id));
      m_rest.push_back(mos.at(id));
    }
  }
  EvaluationReport report;
  report.srcc_selected = srcc(f_sel, m_sel);
  report.srcc_rest = srcc(f_rest, m_rest);
  report.selected_size = f_sel.size();
  report.pool_size = pool_set.size();
  return report;
}

std::vector<ImageId> top_difficult(const std::map<ImageId, double>& f_scores, const MosTable& mos,
                                   std::size_t n) {
  const auto errors = squared_error_table(f_scores, mos);
  if (n > errors.size()) {
    throw Error(ErrorKind::kInvalidValue, "requested " + std::to_string(n) + " of " +
                                              std::to_string(errors.size()) + " images");
  }
  std::vector<std::pair<double, ImageId>> order;
  order.reserve(errors.size());
  for (const auto& [id, e] : errors) order.emplace_back(e, id);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<ImageId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(order[i].second);
  return out;
}

std::string format_selection_csv(const SelectionResult& result) {
  std::string out = "rank,image_id,difficulty,diversity_gain,objective\n";
  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    const auto& s = result.steps[i];
    out += std::to_string(i + 1) + ',' + s.id + ',' + format_real(s.difficulty) + ',' +
           format_real(s.diversity_gain) + ',' + format_real(s.objective) + '\n';
  }
  return out;
}

SelectionResult parse_selection_csv(std::string_view text) {
  csv::Reader reader(text, {"rank", "image_id", "difficulty", "diversity_gain", "objective"});
  std::vector<std::pair<long long, SelectionStep>> rows;
  std::set<ImageId> seen;
  for (const auto& row : reader.rows()) {
    SelectionStep step;
    const auto rank = csv::parse_integer(reader.field(row, "rank"), row.line, "rank");
    step.id = std::string(reader.field(row, "image_id"));
    check_image_id(step.id);
    if (!seen.insert(step.id).second) {
      throw Error(ErrorKind::kDuplicateEntry, "image " + step.id + " selected twice");
    }
    step.difficulty = csv::parse_real(reader.field(row, "difficulty"), row.line, "difficulty");
    step.diversity_gain = csv::parse_real(reader.field(row, "diversity_gain"), row.line, "diversity_gain");
    step.objective = csv::parse_real(reader.field(row, "objective"), row.line, "objective");
    rows.emplace_back(rank, std::move(step));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SelectionResult result;
  for (auto& [_, step] : rows) result.steps.push_back(std::move(step));
  return result;
}

}  // namespace worthiness::select
