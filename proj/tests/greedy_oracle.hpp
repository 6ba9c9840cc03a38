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

// Exhaustive per-step argmax for the difficulty + diversity objective. Every
// candidate's objective is recomputed from scratch at every step, with no
// running sums, and the smallest id wins ties.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "worthiness/failnet.hpp"
#include "worthiness/ingest.hpp"

namespace worthiness::testing {

inline double oracle_sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

inline std::vector<ImageId> brute_force_greedy(const std::map<ImageId, double>& difficulty,
                                               const FeatureStore& features, std::size_t budget,
                                               double lambda) {
  std::vector<ImageId> chosen;
  for (std::size_t k = 1; k <= budget; ++k) {
    const ImageId* best = nullptr;
    double best_value = 0.0;
    // std::map iterates ids ascending, so strict > keeps the smallest id.
    for (const auto& [id, g] : difficulty) {
      bool used = false;
      for (const auto& c : chosen) used = used || c == id;
      if (used) continue;
      double value = g;
      if (k >= 2 && lambda > 0.0) {
        double sum = 0.0;
        for (const auto& c : chosen) sum += oracle_sq_dist(features.at(id).logit, features.at(c).logit);
        value = g + (lambda / static_cast<double>(k - 1)) * sum;
      }
      if (best == nullptr || value > best_value) {
        best = &id;
        best_value = value;
      }
    }
    chosen.push_back(*best);
  }
  return chosen;
}

// One random oracle instance: pool of at most 12 images, budget at most 4.
// Odd instances use small integer difficulties and logits so exact ties occur.
struct GreedyInstance {
  FeatureStore features;
  failnet::FailureNet net;
  std::vector<ImageId> pool;
  std::size_t budget = 1;
  double lambda = 0.0;
};

inline GreedyInstance make_greedy_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pool_size(1, 12);
  std::uniform_int_distribution<int> small(-2, 2);
  std::normal_distribution<double> normal;
  const bool integral = seed % 2 == 1;

  GreedyInstance inst;
  const std::size_t n = pool_size(rng);
  std::uniform_int_distribution<std::size_t> budget(1, std::min<std::size_t>(4, n));
  inst.budget = budget(rng);
  const double lambdas[] = {0.0, 1e-6, 0.05, 0.5, 3.0};
  inst.lambda = lambdas[rng() % 5];

  inst.features.stage_widths = {2, 3};
  inst.features.logit_width = 3;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRecord r;
    r.stages = {std::vector<double>(2), std::vector<double>(3)};
    for (auto& s : r.stages)
      for (auto& x : s) x = integral ? small(rng) : normal(rng);
    r.logit.resize(3);
    for (auto& x : r.logit) x = integral ? small(rng) : normal(rng);
    // Ids deliberately not generated in sorted order.
    const auto id = "u" + std::to_string((i * 7 + 3) % 13) + "_" + std::to_string(i);
    inst.features.records.emplace(id, std::move(r));
    inst.pool.push_back(id);
  }
  if (integral) {
    // Unit weights on integer stage values: g is a small integer, ties abound.
    inst.net = failnet::FailureNet({2, 3}, 1);
    inst.net.stage_weight(0)[0] = 1.0;
    inst.net.stage_weight(1)[2] = 1.0;
    inst.net.out_weight()[0] = 1.0;
    inst.net.out_weight()[1] = -1.0;
  } else {
    failnet::FailureNetConfig config;
    config.stage_widths = {2, 3};
    config.projection_width = 4;
    config.seed = rng();
    inst.net = failnet::init_network(config);
  }
  return inst;
}

}  // namespace worthiness::testing
