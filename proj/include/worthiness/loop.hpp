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

// Closed-loop dataset construction at desk scale. Each iteration trains the
// failure predictor against the current quality model, selects a batch from
// the unlabeled pool, reveals its MOS from an oracle and refits the quality
// model. The quality model is a ridge head over concatenated stage features.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "worthiness/failnet.hpp"
#include "worthiness/ingest.hpp"
#include "worthiness/select.hpp"

namespace worthiness::loop {

inline constexpr double kDefaultRidge = 1e-2;

// Linear model over concatenated stage features.
struct StandinHead {
  std::vector<double> weights;
  double intercept = 0.0;

  double predict(const FeatureRecord& record) const;
  std::map<ImageId, double> predict(const FeatureStore& features,
                                    const std::vector<ImageId>& ids) const;

  bool operator==(const StandinHead&) const = default;
};

// Ridge least squares with an unpenalized intercept. EmptyTrainingSet with
// fewer than two labels.
StandinHead fit_standin_head(const std::vector<ImageId>& ids, const FeatureStore& features,
                             const std::map<ImageId, double>& labels, double ridge = kDefaultRidge);

enum class OracleChannel { kLabel, kEval };

struct OracleRead {
  OracleChannel channel = OracleChannel::kLabel;
  ImageId id;
  std::size_t iteration = 0;  // 0 is the initial labeled pool

  bool operator==(const OracleRead&) const = default;
};

// Ground-truth MOS behind an access log. The label channel is the simulated
// subjective test; the eval channel feeds reported metrics only and never
// reaches any model.
class MosOracle {
 public:
  MosOracle(MosTable truth, double noise_stddev = 0.0, std::uint64_t seed = 0);

  std::map<ImageId, double> reveal(const std::vector<ImageId>& ids, std::size_t iteration);
  double evaluate(const ImageId& id, std::size_t iteration);

  const std::vector<OracleRead>& log() const { return log_; }

 private:
  MosTable truth_;
  double noise_stddev_;
  std::mt19937_64 rng_;
  std::vector<OracleRead> log_;
};

enum class LoopSelector { kWorthiness, kRandom, kCoreset, kRd };

std::string_view loop_selector_name(LoopSelector selector);
LoopSelector parse_loop_selector(std::string_view text);

struct LoopConfig {
  std::size_t iterations = 3;  // T
  std::size_t budget = 100;
  LoopSelector selector = LoopSelector::kWorthiness;
  double lambda = select::kDefaultWorthinessLambda;
  double ridge = kDefaultRidge;
  double label_noise = 0.0;
  std::uint64_t seed = 0;
  failnet::FailureNetConfig failnet;  // stage widths are taken from the features

  void validate() const;
};

struct LoopIteration {
  std::size_t index = 0;  // 1-based
  std::size_t pool_size = 0;
  select::SelectionResult selection;
  double srcc_selected = 0.0;
  double srcc_rest = 0.0;
  double holdout_srcc = 0.0;
  std::optional<double> failnet_loss;  // absent when the selector needs no failure net
};

struct LoopReport {
  LoopConfig config;
  double initial_holdout_srcc = 0.0;
  std::vector<LoopIteration> iterations;

  std::string to_json() const;
};

struct LoopPartition {
  std::vector<ImageId> labeled;
  std::vector<ImageId> unlabeled;
  std::vector<ImageId> holdout;

  static LoopPartition from_manifest(const CorpusManifest& manifest);
};

// Runs T iterations. Selected sets are disjoint; a budget larger than the
// remaining pool raises BudgetExceedsPool at that iteration.
LoopReport run_loop(const FeatureStore& features, const LoopPartition& partition,
                    MosOracle& oracle, const LoopConfig& config);

// Label-channel reads of pool images outside the reveal step that selected
// them. Zero for a well-behaved run.
std::size_t count_pre_reveal_reads(const std::vector<OracleRead>& log,
                                   const LoopPartition& partition, const LoopReport& report);

// Writes report.json and one selection CSV per iteration into
// <out>/run-seed<seed>-<UTC timestamp>/ and returns that directory.
std::filesystem::path write_run_directory(const LoopReport& report,
                                          const std::filesystem::path& out);

}  // namespace worthiness::loop
