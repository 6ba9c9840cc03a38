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

// Failure predictor g(x): one fully connected projection per backbone stage
// (global-average-pooled features in, C channels out, ReLU), concatenated and
// reduced to a scalar by a final fully connected layer. It is trained to rank
// images by the absolute error of a fixed quality model, through the fidelity
// loss on Phi((g(x) - g(y)) / sqrt(2)).

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "worthiness/ingest.hpp"

namespace worthiness::failnet {

struct FailureNetConfig {
  std::vector<std::size_t> stage_widths{64, 128, 256, 512};
  std::size_t projection_width = 128;  // C
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  double decay_factor = 10.0;
  std::size_t decay_every_epochs = 5;
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  std::size_t pairs_per_epoch = 20000;

  // InvalidValue unless every field is positive.
  void validate() const;
  // Learning rate in effect during `epoch` (0-based) under step decay.
  double learning_rate_at(std::size_t epoch) const;

  bool operator==(const FailureNetConfig&) const = default;
};

// All parameters live in one flat vector, layer by layer:
//   for each stage s: W_s (C x d_s, row-major), b_s (C)
//   w_out (S * C), b_out (1)
class FailureNet {
 public:
  FailureNet() = default;
  // Zero-initialized network.
  FailureNet(std::vector<std::size_t> stage_widths, std::size_t projection_width);

  const std::vector<std::size_t>& stage_widths() const { return stage_widths_; }
  std::size_t projection_width() const { return projection_width_; }
  std::size_t stage_count() const { return stage_widths_.size(); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::span<double> stage_weight(std::size_t s);
  std::span<const double> stage_weight(std::size_t s) const;
  std::span<double> stage_bias(std::size_t s);
  std::span<const double> stage_bias(std::size_t s) const;
  std::span<double> out_weight();
  std::span<const double> out_weight() const;
  double& out_bias() { return params_.back(); }
  double out_bias() const { return params_.back(); }

  // g(x). DimensionError if the record's stages do not match the network.
  double forward(const FeatureRecord& record) const;

  // Adds d(loss)/d(params) to `gradient` given upstream d(loss)/d(g(x)).
  void accumulate_gradient(const FeatureRecord& record, double upstream,
                           std::span<double> gradient) const;

  // forward() that keeps the projection pre-activations for backward().
  double forward(const FeatureRecord& record, std::vector<double>& pre) const;
  // accumulate_gradient() from the pre-activations of a previous forward().
  void backward(const FeatureRecord& record, std::span<const double> pre, double upstream,
                std::span<double> gradient) const;

  bool operator==(const FailureNet&) const = default;

 private:
  void check_record(const FeatureRecord& record) const;
  // Pre-activations of every projection unit, stage-major.
  void preactivations(const FeatureRecord& record, std::vector<double>& out) const;

  std::vector<std::size_t> stage_widths_;
  std::size_t projection_width_ = 0;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::size_t out_offset_ = 0;
  std::vector<double> params_;
};

// He (fan-in Gaussian) initialization; biases zero. Fully determined by seed.
FailureNet init_network(const FailureNetConfig& config);

// Phi((g(x) - g(y)) / sqrt(2)): probability that x is harder than y.
double pair_probability(const FailureNet& net, const FeatureRecord& x, const FeatureRecord& y);

struct PairLabel {
  ImageId x;
  ImageId y;
  double p = 0.0;  // 1 when |f(x) - mos(x)| >= |f(y) - mos(y)|
};

PairLabel make_pair_label(const std::map<ImageId, double>& f_scores, const MosTable& mos,
                          const ImageId& x, const ImageId& y);

struct TrainingPair {
  const FeatureRecord* x = nullptr;
  const FeatureRecord* y = nullptr;
  double label = 0.0;
};

// Fidelity loss of one pair given the score difference g(x) - g(y), and its
// derivative with respect to that difference.
struct PairLoss {
  double loss = 0.0;
  double d_diff = 0.0;
};
PairLoss pair_fidelity_loss(double score_diff, double label);

// Mean fidelity loss over `batch`. When `gradient` is non-empty it must have
// parameter_count() entries and receives the gradient of the mean loss
// (overwritten, not accumulated).
double mean_pair_loss(const FailureNet& net, std::span<const TrainingPair> batch,
                      std::span<double> gradient = {});

struct TrainReport {
  std::vector<double> epoch_losses;
  double ranking_accuracy = 0.0;  // NaN when no evaluation ids were given
  double seconds = 0.0;
};

struct TrainResult {
  FailureNet net;
  TrainReport report;
};

// Adam (0.9, 0.999, 1e-8) on the mean fidelity loss with step decay. Each
// epoch draws pairs_per_epoch distinct unordered pairs from `pool` (all pairs
// when fewer exist), in a random orientation. `f_scores` is only read.
// Ranking accuracy is measured on pairs drawn from `eval_ids`.
TrainResult train(FailureNet net, const FeatureStore& features,
                  const std::vector<ImageId>& pool,
                  const std::map<ImageId, double>& f_scores, const MosTable& mos,
                  const FailureNetConfig& config,
                  const std::vector<ImageId>& eval_ids = {});

// Fraction of pairs (with distinct errors) ordered correctly by g. Ties in g
// count one half.
double pairwise_ranking_accuracy(const FailureNet& net, const FeatureStore& features,
                                 const std::vector<ImageId>& ids,
                                 const std::map<ImageId, double>& abs_errors,
                                 std::uint64_t seed, std::size_t max_pairs = 5000);

// Checkpoint JSON: {config, seed, epoch, parameters{stages[{weight,bias}],
// out_weight, out_bias}}.
std::string format_checkpoint(const FailureNet& net, const FailureNetConfig& config,
                              std::size_t epoch);
struct Checkpoint {
  FailureNet net;
  FailureNetConfig config;
  std::size_t epoch = 0;
};
Checkpoint parse_checkpoint(std::string_view text);

std::string format_loss_history(const TrainReport& report);

}  // namespace worthiness::failnet
