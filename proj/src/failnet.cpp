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

#include "worthiness/failnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

#include "json.hpp"
#include "worthiness/error.hpp"
#include "worthiness/metrics.hpp"

namespace worthiness::failnet {

using nlohmann::json;

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

}  // namespace

void FailureNetConfig::validate() const {
  if (stage_widths.empty()) throw Error(ErrorKind::kInvalidValue, "no stages configured");
  for (const auto w : stage_widths) {
    if (w == 0) throw Error(ErrorKind::kInvalidValue, "stage widths must be positive");
  }
  if (projection_width == 0 || decay_every_epochs == 0 || epochs == 0 || batch_size == 0 ||
      pairs_per_epoch == 0) {
    throw Error(ErrorKind::kInvalidValue, "failure-net sizes and counts must be positive");
  }
  if (!(learning_rate > 0.0) || !(decay_factor > 0.0)) {
    throw Error(ErrorKind::kInvalidValue, "learning rate and decay factor must be positive");
  }
}

double FailureNetConfig::learning_rate_at(std::size_t epoch) const {
  const auto steps = static_cast<double>(epoch / decay_every_epochs);
  return learning_rate / std::pow(decay_factor, steps);
}

// ---------------------------------------------------------------------------
// FailureNet

FailureNet::FailureNet(std::vector<std::size_t> stage_widths, std::size_t projection_width)
    : stage_widths_(std::move(stage_widths)), projection_width_(projection_width) {
  std::size_t offset = 0;
  for (const auto width : stage_widths_) {
    weight_offset_.push_back(offset);
    offset += width * projection_width_;
    bias_offset_.push_back(offset);
    offset += projection_width_;
  }
  out_offset_ = offset;
  offset += stage_widths_.size() * projection_width_ + 1;
  params_.assign(offset, 0.0);
}

std::span<double> FailureNet::stage_weight(std::size_t s) {
  return {params_.data() + weight_offset_.at(s), stage_widths_[s] * projection_width_};
}
std::span<const double> FailureNet::stage_weight(std::size_t s) const {
  return {params_.data() + weight_offset_.at(s), stage_widths_[s] * projection_width_};
}
std::span<double> FailureNet::stage_bias(std::size_t s) {
  return {params_.data() + bias_offset_.at(s), projection_width_};
}
std::span<const double> FailureNet::stage_bias(std::size_t s) const {
  return {params_.data() + bias_offset_.at(s), projection_width_};
}
std::span<double> FailureNet::out_weight() {
  return {params_.data() + out_offset_, stage_widths_.size() * projection_width_};
}
std::span<const double> FailureNet::out_weight() const {
  return {params_.data() + out_offset_, stage_widths_.size() * projection_width_};
}

void FailureNet::check_record(const FeatureRecord& record) const {
  if (record.stages.size() != stage_widths_.size()) {
    throw Error(ErrorKind::kDimensionError,
                "record has " + std::to_string(record.stages.size()) + " stages, network expects " +
                    std::to_string(stage_widths_.size()));
  }
  for (std::size_t s = 0; s < stage_widths_.size(); ++s) {
    if (record.stages[s].size() != stage_widths_[s]) {
      throw Error(ErrorKind::kDimensionError,
                  "stage " + std::to_string(s) + " has width " +
                      std::to_string(record.stages[s].size()) + ", network expects " +
                      std::to_string(stage_widths_[s]));
    }
  }
}

void FailureNet::preactivations(const FeatureRecord& record, std::vector<double>& out) const {
  const std::size_t c_width = projection_width_;
  out.resize(stage_widths_.size() * c_width);
  for (std::size_t s = 0; s < stage_widths_.size(); ++s) {
    const std::size_t d = stage_widths_[s];
    const double* w = params_.data() + weight_offset_[s];
    const double* b = params_.data() + bias_offset_[s];
    const double* x = record.stages[s].data();
    for (std::size_t c = 0; c < c_width; ++c) {
      const double* row = w + c * d;
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += row[k] * x[k];
      out[s * c_width + c] = acc + b[c];
    }
  }
}

double FailureNet::forward(const FeatureRecord& record) const {
  thread_local std::vector<double> pre;
  return forward(record, pre);
}

double FailureNet::forward(const FeatureRecord& record, std::vector<double>& pre) const {
  check_record(record);
  preactivations(record, pre);
  const double* w_out = params_.data() + out_offset_;
  double g = 0.0;
  for (std::size_t i = 0; i < pre.size(); ++i) g += w_out[i] * std::max(pre[i], 0.0);
  return g + params_.back();
}

void FailureNet::accumulate_gradient(const FeatureRecord& record, double upstream,
                                     std::span<double> gradient) const {
  thread_local std::vector<double> pre;
  forward(record, pre);
  backward(record, pre, upstream, gradient);
}

void FailureNet::backward(const FeatureRecord& record, std::span<const double> pre,
                          double upstream, std::span<double> gradient) const {
  if (gradient.size() != params_.size() || pre.size() != stage_count() * projection_width_) {
    throw Error(ErrorKind::kShapeError, "gradient or activation buffer has the wrong size");
  }
  const std::size_t c_width = projection_width_;
  const double* w_out = params_.data() + out_offset_;
  double* g_out = gradient.data() + out_offset_;
  for (std::size_t i = 0; i < pre.size(); ++i) g_out[i] += upstream * std::max(pre[i], 0.0);
  gradient.back() += upstream;

  for (std::size_t s = 0; s < stage_widths_.size(); ++s) {
    const std::size_t d = stage_widths_[s];
    double* g_w = gradient.data() + weight_offset_[s];
    double* g_b = gradient.data() + bias_offset_[s];
    const double* x = record.stages[s].data();
    for (std::size_t c = 0; c < c_width; ++c) {
      if (pre[s * c_width + c] <= 0.0) continue;
      const double delta = upstream * w_out[s * c_width + c];
      g_b[c] += delta;
      double* row = g_w + c * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += delta * x[k];
    }
  }
}

FailureNet init_network(const FailureNetConfig& config) {
  config.validate();
  FailureNet net(config.stage_widths, config.projection_width);
  std::mt19937_64 rng(config.seed);
  for (std::size_t s = 0; s < net.stage_count(); ++s) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(config.stage_widths[s])));
    for (auto& w : net.stage_weight(s)) w = dist(rng);
  }
  auto out = net.out_weight();
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(out.size())));
  for (auto& w : out) w = dist(rng);
  return net;
}

double pair_probability(const FailureNet& net, const FeatureRecord& x, const FeatureRecord& y) {
  return std_normal_cdf((net.forward(x) - net.forward(y)) / kSqrt2);
}

PairLabel make_pair_label(const std::map<ImageId, double>& f_scores, const MosTable& mos,
                          const ImageId& x, const ImageId& y) {
  if (x == y) throw Error(ErrorKind::kInvalidValue, "pair label needs two distinct images");
  auto abs_error = [&](const ImageId& id) {
    auto it = f_scores.find(id);
    if (it == f_scores.end()) throw Error(ErrorKind::kUnknownImage, "no score for image " + id);
    return std::abs(it->second - mos.at(id));
  };
  return PairLabel{x, y, abs_error(x) >= abs_error(y) ? 1.0 : 0.0};
}

PairLoss pair_fidelity_loss(double score_diff, double label) {
  const double z = score_diff / kSqrt2;
  // Both tails through erfc so 1 - p_hat keeps its precision.
  const double p_hat = std_normal_cdf(z);
  const double q_hat = std_normal_cdf(-z);
  const double density = std_normal_pdf(z) / kSqrt2;  // d p_hat / d diff
  const double a = std::sqrt(label * p_hat);
  const double b = std::sqrt((1.0 - label) * q_hat);
  PairLoss out;
  out.loss = std::clamp(1.0 - a - b, 0.0, 1.0);
  // d/d diff of -sqrt(label * p_hat) - sqrt((1 - label) * q_hat). Where a tail
  // underflows to zero the density underflows faster, so the term vanishes.
  double d = 0.0;
  if (label > 0.0 && p_hat > 0.0) d -= 0.5 * std::sqrt(label / p_hat) * density;
  if (label < 1.0 && q_hat > 0.0) d += 0.5 * std::sqrt((1.0 - label) / q_hat) * density;
  out.d_diff = d;
  return out;
}

double mean_pair_loss(const FailureNet& net, std::span<const TrainingPair> batch,
                      std::span<double> gradient) {
  if (batch.empty()) throw Error(ErrorKind::kEmptyTrainingSet, "empty batch");
  const bool want_gradient = !gradient.empty();
  if (want_gradient) std::fill(gradient.begin(), gradient.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  thread_local std::vector<double> pre_x;
  thread_local std::vector<double> pre_y;
  for (const auto& pair : batch) {
    const double diff = net.forward(*pair.x, pre_x) - net.forward(*pair.y, pre_y);
    const auto pl = pair_fidelity_loss(diff, pair.label);
    total += pl.loss;
    if (want_gradient && pl.d_diff != 0.0) {
      net.backward(*pair.x, pre_x, pl.d_diff * scale, gradient);
      net.backward(*pair.y, pre_y, -pl.d_diff * scale, gradient);
    }
  }
  return total * scale;
}

namespace {

// Distinct unordered index pairs, uniform without replacement, each in a
// random orientation.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t count,
                                                              std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (total <= count) {
    pairs.reserve(total);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
  } else {
    pairs.reserve(count);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(count * 2);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (pairs.size() < count) {
      std::size_t i = pick(rng);
      std::size_t j = pick(rng);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (!seen.insert(static_cast<std::uint64_t>(i) * n + j).second) continue;
      pairs.emplace_back(i, j);
    }
  }
  std::bernoulli_distribution flip(0.5);
  for (auto& p : pairs) {
    if (flip(rng)) std::swap(p.first, p.second);
  }
  return pairs;
}

std::map<ImageId, double> absolute_errors(const std::vector<ImageId>& ids,
                                          const std::map<ImageId, double>& f_scores,
                                          const MosTable& mos) {
  std::map<ImageId, double> out;
  for (const auto& id : ids) {
    auto it = f_scores.find(id);
    if (it == f_scores.end()) throw Error(ErrorKind::kUnknownImage, "no score for image " + id);
    out.emplace(id, std::abs(it->second - mos.at(id)));
  }
  return out;
}

}  // namespace

double pairwise_ranking_accuracy(const FailureNet& net, const FeatureStore& features,
                                 const std::vector<ImageId>& ids,
                                 const std::map<ImageId, double>& abs_errors, std::uint64_t seed,
                                 std::size_t max_pairs) {
  if (ids.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> g(ids.size());
  std::vector<double> err(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    g[i] = net.forward(features.at(ids[i]));
    err[i] = abs_errors.at(ids[i]);
  }
  std::mt19937_64 rng(seed);
  const auto pairs = sample_pairs(ids.size(), max_pairs, rng);
  double correct = 0.0;
  std::size_t counted = 0;
  for (const auto& [i, j] : pairs) {
    if (err[i] == err[j]) continue;
    ++counted;
    if (g[i] == g[j]) {
      correct += 0.5;
    } else if ((g[i] > g[j]) == (err[i] > err[j])) {
      correct += 1.0;
    }
  }
  return counted ? correct / static_cast<double>(counted)
                 : std::numeric_limits<double>::quiet_NaN();
}

TrainResult train(FailureNet net, const FeatureStore& features, const std::vector<ImageId>& pool,
                  const std::map<ImageId, double>& f_scores, const MosTable& mos,
                  const FailureNetConfig& config, const std::vector<ImageId>& eval_ids) {
  config.validate();
  if (pool.size() < 2) {
    throw Error(ErrorKind::kEmptyTrainingSet, "failure-net training needs at least two labeled images");
  }
  if (net.stage_widths() != config.stage_widths) {
    throw Error(ErrorKind::kDimensionError, "network stage widths differ from the configuration");
  }
  const auto start = std::chrono::steady_clock::now();

  std::vector<ImageId> ids = pool;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto errors = absolute_errors(ids, f_scores, mos);
  std::vector<const FeatureRecord*> records;
  std::vector<double> err;
  records.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& rec = features.at(id);
    records.push_back(&rec);
    err.push_back(errors.at(id));
  }

  const std::size_t n_params = net.parameter_count();
  std::vector<double> grad(n_params, 0.0);
  std::vector<double> m(n_params, 0.0);
  std::vector<double> v(n_params, 0.0);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  std::uint64_t step = 0;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainReport report;
  std::vector<TrainingPair> batch;
  batch.reserve(config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    const auto pairs = sample_pairs(ids.size(), config.pairs_per_epoch, rng);
    double epoch_loss = 0.0;
    for (std::size_t start_idx = 0; start_idx < pairs.size(); start_idx += config.batch_size) {
      const std::size_t end_idx = std::min(pairs.size(), start_idx + config.batch_size);
      batch.clear();
      for (std::size_t k = start_idx; k < end_idx; ++k) {
        const auto [i, j] = pairs[k];
        batch.push_back(TrainingPair{records[i], records[j], err[i] >= err[j] ? 1.0 : 0.0});
      }
      const double loss = mean_pair_loss(net, batch, grad);
      epoch_loss += loss * static_cast<double>(batch.size());

      ++step;
      const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      auto params = net.parameters();
      for (std::size_t p = 0; p < n_params; ++p) {
        m[p] = kBeta1 * m[p] + (1.0 - kBeta1) * grad[p];
        v[p] = kBeta2 * v[p] + (1.0 - kBeta2) * grad[p] * grad[p];
        const double m_hat = m[p] / bias1;
        const double v_hat = v[p] / bias2;
        params[p] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
      }
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }

  if (!eval_ids.empty()) {
    const auto eval_errors = absolute_errors(eval_ids, f_scores, mos);
    std::vector<ImageId> sorted_eval = eval_ids;
    std::sort(sorted_eval.begin(), sorted_eval.end());
    report.ranking_accuracy =
        pairwise_ranking_accuracy(net, features, sorted_eval, eval_errors, config.seed + 1);
  } else {
    report.ranking_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return TrainResult{std::move(net), std::move(report)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json config_to_json(const FailureNetConfig& c) {
  return json{{"stage_widths", c.stage_widths},
              {"projection_width", c.projection_width},
              {"seed", c.seed},
              {"learning_rate", c.learning_rate},
              {"decay_factor", c.decay_factor},
              {"decay_every_epochs", c.decay_every_epochs},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"pairs_per_epoch", c.pairs_per_epoch}};
}

FailureNetConfig config_from_json(const json& j) {
  FailureNetConfig c;
  c.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
  c.projection_width = j.at("projection_width").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.decay_factor = j.at("decay_factor").get<double>();
  c.decay_every_epochs = j.at("decay_every_epochs").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.pairs_per_epoch = j.at("pairs_per_epoch").get<std::size_t>();
  return c;
}

json span_to_json(std::span<const double> values) {
  return json(std::vector<double>(values.begin(), values.end()));
}

void json_to_span(const json& j, std::span<double> out, const std::string& what) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != out.size()) {
    throw Error(ErrorKind::kDimensionError, what + " has " + std::to_string(values.size()) +
                                                " values, expected " + std::to_string(out.size()));
  }
  for (const double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidValue, what + " holds a non-finite value");
  }
  std::copy(values.begin(), values.end(), out.begin());
}

}  // namespace

std::string format_checkpoint(const FailureNet& net, const FailureNetConfig& config,
                              std::size_t epoch) {
  json stages = json::array();
  for (std::size_t s = 0; s < net.stage_count(); ++s) {
    stages.push_back(json{{"weight", span_to_json(net.stage_weight(s))},
                          {"bias", span_to_json(net.stage_bias(s))}});
  }
  json doc{{"config", config_to_json(config)},
           {"seed", config.seed},
           {"epoch", epoch},
           {"parameters",
            json{{"stages", std::move(stages)},
                 {"out_weight", span_to_json(net.out_weight())},
                 {"out_bias", net.out_bias()}}}};
  return doc.dump() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  Checkpoint cp;
  try {
    const json doc = json::parse(text);
    cp.config = config_from_json(doc.at("config"));
    cp.config.validate();
    cp.epoch = doc.at("epoch").get<std::size_t>();
    cp.net = FailureNet(cp.config.stage_widths, cp.config.projection_width);
    const auto& params = doc.at("parameters");
    const auto& stages = params.at("stages");
    if (stages.size() != cp.net.stage_count()) {
      throw Error(ErrorKind::kDimensionError, "checkpoint stage count differs from its config");
    }
    for (std::size_t s = 0; s < cp.net.stage_count(); ++s) {
      json_to_span(stages[s].at("weight"), cp.net.stage_weight(s), "stage weight");
      json_to_span(stages[s].at("bias"), cp.net.stage_bias(s), "stage bias");
    }
    json_to_span(params.at("out_weight"), cp.net.out_weight(), "output weight");
    cp.net.out_bias() = params.at("out_bias").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("malformed checkpoint: ") + e.what());
  }
  return cp;
}

std::string format_loss_history(const TrainReport& report) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < report.epoch_losses.size(); ++e) {
    out += std::to_string(e + 1) + ',' + format_real(report.epoch_losses[e]) + '\n';
  }
  return out;
}

}  // namespace worthiness::failnet
