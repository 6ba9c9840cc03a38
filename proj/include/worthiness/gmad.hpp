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

// Group maximum differentiation (gMAD) pair selection between fixed quality
// models. A defender model's scores are binned into quality levels; inside a
// level the attacker picks the pair it rates most differently.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "worthiness/ingest.hpp"

namespace worthiness::gmad {

struct GmadConfig {
  std::size_t levels = 5;          // Q
  std::size_t pairs_per_level = 2;  // K
};

struct GmadPair {
  ModelId attacker;
  ModelId defender;
  std::size_t level = 0;
  ImageId x;  // rated higher by the attacker
  ImageId y;
  double attacker_gap = 0.0;
  double alpha = 0.0;  // median defender score of the level

  bool operator==(const GmadPair&) const = default;
};

// Equal-frequency bins over the defender scores, ascending. Sizes differ by
// at most one; the larger bins come first.
std::vector<std::vector<ImageId>> build_level_sets(
    const std::map<ImageId, double>& defender_scores, std::size_t levels);

// Maximum-gap pair inside `bin`, skipping excluded ids. nullopt when fewer than
// two images remain.
std::optional<std::pair<ImageId, ImageId>> select_pair(
    const std::map<ImageId, double>& attacker_scores,
    const std::vector<ImageId>& bin, const std::set<ImageId>& excluded);

// Full round robin over every ordered (attacker, defender) pair of models.
// Images are consumed globally: no image appears in two returned pairs.
std::vector<GmadPair> run_round_robin(const ScoreTable& scores,
                                      const GmadConfig& config);

std::string format_pairs_csv(const std::vector<GmadPair>& pairs);
std::vector<GmadPair> parse_pairs_csv(std::string_view text);

}  // namespace worthiness::gmad
