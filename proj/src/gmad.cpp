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

#include "worthiness/gmad.hpp"

#include <algorithm>

#include "csv.hpp"
#include "worthiness/error.hpp"

namespace worthiness::gmad {

std::vector<std::vector<ImageId>> build_level_sets(
    const std::map<ImageId, double>& defender_scores, std::size_t levels) {
  if (levels == 0) throw Error(ErrorKind::kInvalidValue, "level count must be positive");
  std::vector<std::pair<double, ImageId>> sorted;
  sorted.reserve(defender_scores.size());
  for (const auto& [id, score] : defender_scores) sorted.emplace_back(score, id);
  std::sort(sorted.begin(), sorted.end());

  const std::size_t n = sorted.size();
  const std::size_t base = n / levels;
  const std::size_t extra = n % levels;
  if (base < 2) {
    throw Error(ErrorKind::kInsufficientLevelSet,
                std::to_string(n) + " images cannot fill " + std::to_string(levels) +
                    " levels with at least two images each");
  }
  std::vector<std::vector<ImageId>> bins(levels);
  std::size_t cursor = 0;
  for (std::size_t q = 0; q < levels; ++q) {
    const std::size_t size = base + (q < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) bins[q].push_back(sorted[cursor++].second);
  }
  return bins;
}

std::optional<std::pair<ImageId, ImageId>> select_pair(
    const std::map<ImageId, double>& attacker_scores, const std::vector<ImageId>& bin,
    const std::set<ImageId>& excluded) {
  std::vector<const ImageId*> available;
  for (const auto& id : bin) {
    if (!excluded.count(id)) available.push_back(&id);
  }
  if (available.size() < 2) return std::nullopt;
  std::sort(available.begin(), available.end(),
            [](const ImageId* a, const ImageId* b) { return *a < *b; });

  auto score_of = [&](const ImageId& id) {
    auto it = attacker_scores.find(id);
    if (it == attacker_scores.end()) {
      throw Error(ErrorKind::kUnknownImage, "attacker has no score for " + id);
    }
    return it->second;
  };

  // The gap f(x) - f(y) is maximal for x = argmax, y = argmin. Strict
  // comparisons over sorted ids keep the lexicographically smallest on ties.
  const ImageId* best_x = available.front();
  double max_score = score_of(*best_x);
  for (const ImageId* id : available) {
    const double s = score_of(*id);
    if (s > max_score) {
      max_score = s;
      best_x = id;
    }
  }
  const ImageId* best_y = nullptr;
  double min_score = 0.0;
  for (const ImageId* id : available) {
    if (id == best_x) continue;
    const double s = score_of(*id);
    if (best_y == nullptr || s < min_score) {
      min_score = s;
      best_y = id;
    }
  }
  return std::make_pair(*best_x, *best_y);
}

namespace {

double median_of(const std::vector<ImageId>& bin, const std::map<ImageId, double>& scores) {
  std::vector<double> values;
  values.reserve(bin.size());
  for (const auto& id : bin) values.push_back(scores.at(id));
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<GmadPair> run_round_robin(const ScoreTable& scores, const GmadConfig& config) {
  if (config.levels == 0 || config.pairs_per_level == 0) {
    throw Error(ErrorKind::kInvalidValue, "Q and K must be positive");
  }
  const auto models = scores.models();
  const auto images = scores.images();
  std::map<ModelId, std::map<ImageId, double>> per_model;
  for (const auto& model : models) {
    per_model[model] = scores.model_scores(model);
    if (per_model[model].size() != images.size()) {
      throw Error(ErrorKind::kUnknownImage,
                  "model " + model + " does not score every image in the table");
    }
  }

  struct Level {
    std::vector<ImageId> bin;
    double alpha = 0.0;
  };
  std::map<ModelId, std::vector<Level>> levels;
  for (const auto& model : models) {
    auto bins = build_level_sets(per_model[model], config.levels);
    auto& out = levels[model];
    for (auto& bin : bins) {
      const double alpha = median_of(bin, per_model[model]);
      out.push_back(Level{std::move(bin), alpha});
    }
  }

  std::vector<GmadPair> pairs;
  std::set<ImageId> used;
  for (const auto& attacker : models) {
    for (const auto& defender : models) {
      if (attacker == defender) continue;
      const auto& attacker_scores = per_model[attacker];
      for (std::size_t q = 0; q < config.levels; ++q) {
        const auto& level = levels[defender][q];
        for (std::size_t k = 0; k < config.pairs_per_level; ++k) {
          auto chosen = select_pair(attacker_scores, level.bin, used);
          if (!chosen) break;
          GmadPair pair;
          pair.attacker = attacker;
          pair.defender = defender;
          pair.level = q;
          pair.x = chosen->first;
          pair.y = chosen->second;
          pair.attacker_gap = attacker_scores.at(pair.x) - attacker_scores.at(pair.y);
          pair.alpha = level.alpha;
          used.insert(pair.x);
          used.insert(pair.y);
          pairs.push_back(std::move(pair));
        }
      }
    }
  }
  return pairs;
}

std::string format_pairs_csv(const std::vector<GmadPair>& pairs) {
  std::string out = "attacker,defender,level,x,y,attacker_gap,alpha\n";
  for (const auto& p : pairs) {
    out += p.attacker + ',' + p.defender + ',' + std::to_string(p.level) + ',' + p.x + ',' +
           p.y + ',' + format_real(p.attacker_gap) + ',' + format_real(p.alpha) + '\n';
  }
  return out;
}

std::vector<GmadPair> parse_pairs_csv(std::string_view text) {
  csv::Reader reader(text, {"attacker", "defender", "level", "x", "y", "attacker_gap", "alpha"});
  std::vector<GmadPair> pairs;
  for (const auto& row : reader.rows()) {
    GmadPair p;
    p.attacker = std::string(reader.field(row, "attacker"));
    p.defender = std::string(reader.field(row, "defender"));
    const auto level = csv::parse_integer(reader.field(row, "level"), row.line, "level");
    if (level < 0) throw Error(ErrorKind::kInvalidValue, "negative level on line " + std::to_string(row.line));
    p.level = static_cast<std::size_t>(level);
    p.x = std::string(reader.field(row, "x"));
    p.y = std::string(reader.field(row, "y"));
    check_image_id(p.x);
    check_image_id(p.y);
    if (p.x == p.y || p.attacker == p.defender) {
      throw Error(ErrorKind::kInvalidValue, "degenerate pair on line " + std::to_string(row.line));
    }
    p.attacker_gap = csv::parse_real(reader.field(row, "attacker_gap"), row.line, "attacker_gap");
    p.alpha = csv::parse_real(reader.field(row, "alpha"), row.line, "alpha");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace worthiness::gmad
