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

#include "worthiness/loop.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include "json.hpp"
#include "worthiness/error.hpp"
#include "worthiness/metrics.hpp"

namespace worthiness::loop {

using nlohmann::json;

double StandinHead::predict(const FeatureRecord& record) const {
  double acc = intercept;
  std::size_t k = 0;
  for (const auto& stage : record.stages) {
    for (const double v : stage) {
      if (k >= weights.size()) throw Error(ErrorKind::kDimensionError, "record wider than head");
      acc += weights[k++] * v;
    }
  }
  if (k != weights.size()) throw Error(ErrorKind::kDimensionError, "record narrower than head");
  return acc;
}

std::map<ImageId, double> StandinHead::predict(const FeatureStore& features,
                                               const std::vector<ImageId>& ids) const {
  std::map<ImageId, double> out;
  for (const auto& id : ids) out.emplace(id, predict(features.at(id)));
  return out;
}

StandinHead fit_standin_head(const std::vector<ImageId>& ids, const FeatureStore& features,
                             const std::map<ImageId, double>& labels, double ridge) {
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    throw Error(ErrorKind::kInvalidValue, "ridge strength must be a nonnegative real");
  }
  std::vector<ImageId> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() < 2) {
    throw Error(ErrorKind::kEmptyTrainingSet, "the quality head needs at least two labeled images");
  }
  std::size_t dim = 0;
  for (const auto w : features.stage_widths) dim += w;

  const auto n = static_cast<Eigen::Index>(sorted.size());
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = sorted[static_cast<std::size_t>(i)];
    const auto row = features.at(id).concatenated_stages();
    if (row.size() != dim) throw Error(ErrorKind::kDimensionError, "feature width mismatch for " + id);
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
    auto it = labels.find(id);
    if (it == labels.end()) throw Error(ErrorKind::kUnknownImage, "no label for image " + id);
    y(i) = it->second;
  }
  // Centering removes the intercept from the penalized problem.
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  x.rowwise() -= x_mean;
  y.array() -= y_mean;
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = x.transpose() * y;
  Eigen::VectorXd w = gram.ldlt().solve(rhs);
  if (!w.allFinite()) {
    // Singular system at ridge 0: fall back to the minimum-norm solution.
    w = gram.completeOrthogonalDecomposition().solve(rhs);
  }

  StandinHead head;
  head.weights.assign(w.data(), w.data() + w.size());
  head.intercept = y_mean - x_mean.dot(w);
  return head;
}

MosOracle::MosOracle(MosTable truth, double noise_stddev, std::uint64_t seed)
    : truth_(std::move(truth)), noise_stddev_(noise_stddev), rng_(seed) {
  if (!(noise_stddev >= 0.0) || !std::isfinite(noise_stddev)) {
    throw Error(ErrorKind::kInvalidValue, "label noise must be a nonnegative real");
  }
}

std::map<ImageId, double> MosOracle::reveal(const std::vector<ImageId>& ids, std::size_t iteration) {
  std::vector<ImageId> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  std::normal_distribution<double> noise(0.0, noise_stddev_ > 0.0 ? noise_stddev_ : 1.0);
  std::map<ImageId, double> out;
  for (const auto& id : sorted) {
    log_.push_back(OracleRead{OracleChannel::kLabel, id, iteration});
    double v = truth_.at(id);
    if (noise_stddev_ > 0.0) v += noise(rng_);
    out.emplace(id, v);
  }
  return out;
}

double MosOracle::evaluate(const ImageId& id, std::size_t iteration) {
  log_.push_back(OracleRead{OracleChannel::kEval, id, iteration});
  return truth_.at(id);
}

std::string_view loop_selector_name(LoopSelector selector) {
  switch (selector) {
    case LoopSelector::kWorthiness: return "worthiness";
    case LoopSelector::kRandom: return "random";
    case LoopSelector::kCoreset: return "coreset";
    case LoopSelector::kRd: return "rd";
  }
  return "worthiness";
}

LoopSelector parse_loop_selector(std::string_view text) {
  for (auto s : {LoopSelector::kWorthiness, LoopSelector::kRandom, LoopSelector::kCoreset,
                 LoopSelector::kRd}) {
    if (loop_selector_name(s) == text) return s;
  }
  throw Error(ErrorKind::kInvalidValue, "unknown loop selector '" + std::string(text) + "'");
}

void LoopConfig::validate() const {
  if (iterations == 0) throw Error(ErrorKind::kInvalidValue, "iteration count must be at least 1");
  if (budget == 0) throw Error(ErrorKind::kInvalidValue, "budget must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::kInvalidValue, "lambda must be a nonnegative real");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    throw Error(ErrorKind::kInvalidValue, "ridge strength must be a nonnegative real");
  }
  if (!(label_noise >= 0.0) || !std::isfinite(label_noise)) {
    throw Error(ErrorKind::kInvalidValue, "label noise must be a nonnegative real");
  }
}

LoopPartition LoopPartition::from_manifest(const CorpusManifest& manifest) {
  return LoopPartition{manifest.ids_in(Partition::kLabeled), manifest.ids_in(Partition::kUnlabeled),
                       manifest.ids_in(Partition::kHoldout)};
}

namespace {

double holdout_srcc(const StandinHead& head, const FeatureStore& features,
                    const std::vector<ImageId>& holdout, MosOracle& oracle, std::size_t iteration) {
  std::vector<double> pred, truth;
  for (const auto& id : holdout) {
    pred.push_back(head.predict(features.at(id)));
    truth.push_back(oracle.evaluate(id, iteration));
  }
  return srcc(pred, truth);
}

// Seeds for the per-iteration random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_partition(const LoopPartition& partition, const FeatureStore& features) {
  std::set<ImageId> seen;
  for (const auto* part : {&partition.labeled, &partition.unlabeled, &partition.holdout}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) {
        throw Error(ErrorKind::kDuplicateEntry, "image " + id + " appears in two partitions");
      }
      if (!features.contains(id)) throw Error(ErrorKind::kUnknownImage, "no features for image " + id);
    }
  }
  if (partition.holdout.size() < 2) {
    throw Error(ErrorKind::kShapeError, "holdout needs at least two images");
  }
}

}  // namespace

LoopReport run_loop(const FeatureStore& features, const LoopPartition& partition,
                    MosOracle& oracle, const LoopConfig& config) {
  config.validate();
  check_partition(partition, features);

  LoopReport report;
  report.config = config;

  std::map<ImageId, double> labels = oracle.reveal(partition.labeled, 0);
  std::vector<ImageId> labeled(partition.labeled);
  std::sort(labeled.begin(), labeled.end());
  StandinHead head = fit_standin_head(labeled, features, labels, config.ridge);
  report.initial_holdout_srcc = holdout_srcc(head, features, partition.holdout, oracle, 0);

  std::set<ImageId> pool(partition.unlabeled.begin(), partition.unlabeled.end());
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    LoopIteration it;
    it.index = t;
    const std::vector<ImageId> current(pool.begin(), pool.end());
    it.pool_size = current.size();
    if (config.budget > current.size()) {
      throw Error(ErrorKind::kBudgetExceedsPool,
                  "iteration " + std::to_string(t) + ": budget " + std::to_string(config.budget) +
                      " exceeds remaining pool of " + std::to_string(current.size()));
    }

    select::SelectionConfig sel{config.budget, config.lambda, mix_seed(config.seed, 2 * t)};
    switch (config.selector) {
      case LoopSelector::kWorthiness: {
        auto fconfig = config.failnet;
        fconfig.stage_widths = features.stage_widths;
        fconfig.seed = mix_seed(config.seed, 2 * t + 1);
        const auto f_labeled = head.predict(features, labeled);
        MosTable known{labels};
        auto trained = failnet::train(failnet::init_network(fconfig), features, labeled,
                                      f_labeled, known, fconfig);
        it.failnet_loss = trained.report.epoch_losses.back();
        it.selection = select::greedy_worthiness_select(current, trained.net, features, sel);
        break;
      }
      case LoopSelector::kRandom:
        it.selection = select::random_select(current, sel);
        break;
      case LoopSelector::kCoreset:
        it.selection = select::coreset_select(current, features, sel);
        break;
      case LoopSelector::kRd:
        it.selection = select::rd_select(current, features, sel);
        break;
    }

    // Selection quality of the current model, measured before the refit.
    const auto f_pool = head.predict(features, current);
    const auto chosen = it.selection.ids();
    MosTable eval_mos;
    for (const auto& id : current) eval_mos.values.emplace(id, oracle.evaluate(id, t));
    const auto eval = select::evaluate_selection(chosen, current, f_pool, eval_mos);
    it.srcc_selected = eval.srcc_selected;
    it.srcc_rest = eval.srcc_rest;

    for (auto& [id, v] : oracle.reveal(chosen, t)) labels.emplace(id, v);
    for (const auto& id : chosen) {
      pool.erase(id);
      labeled.push_back(id);
    }
    std::sort(labeled.begin(), labeled.end());
    head = fit_standin_head(labeled, features, labels, config.ridge);
    it.holdout_srcc = holdout_srcc(head, features, partition.holdout, oracle, t);
    report.iterations.push_back(std::move(it));
  }
  return report;
}

std::size_t count_pre_reveal_reads(const std::vector<OracleRead>& log,
                                   const LoopPartition& partition, const LoopReport& report) {
  std::set<ImageId> initial(partition.labeled.begin(), partition.labeled.end());
  std::map<ImageId, std::size_t> revealed_at;
  for (const auto& it : report.iterations) {
    for (const auto& step : it.selection.steps) revealed_at.emplace(step.id, it.index);
  }
  std::size_t bad = 0;
  for (const auto& read : log) {
    if (read.channel != OracleChannel::kLabel) continue;
    if (read.iteration == 0 && initial.count(read.id)) continue;
    auto at = revealed_at.find(read.id);
    if (at == revealed_at.end() || at->second != read.iteration) ++bad;
  }
  return bad;
}

namespace {

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string LoopReport::to_json() const {
  const auto& f = config.failnet;
  json doc;
  doc["config"] = {
      {"iterations", config.iterations},
      {"budget", config.budget},
      {"selector", std::string(loop_selector_name(config.selector))},
      {"lambda", config.lambda},
      {"ridge", config.ridge},
      {"label_noise", config.label_noise},
      {"seed", config.seed},
      {"failnet",
       {{"projection_width", f.projection_width},
        {"learning_rate", f.learning_rate},
        {"decay_factor", f.decay_factor},
        {"decay_every_epochs", f.decay_every_epochs},
        {"epochs", f.epochs},
        {"batch_size", f.batch_size},
        {"pairs_per_epoch", f.pairs_per_epoch}}},
  };
  doc["initial_holdout_srcc"] = real_or_null(initial_holdout_srcc);
  json its = json::array();
  for (const auto& it : iterations) {
    its.push_back({{"iteration", it.index},
                   {"pool_size", it.pool_size},
                   {"selected", it.selection.ids()},
                   {"srcc_selected", real_or_null(it.srcc_selected)},
                   {"srcc_rest", real_or_null(it.srcc_rest)},
                   {"holdout_srcc", real_or_null(it.holdout_srcc)},
                   {"failnet_loss", it.failnet_loss ? real_or_null(*it.failnet_loss) : json(nullptr)}});
  }
  doc["iterations"] = std::move(its);
  return doc.dump(2) + "\n";
}

std::filesystem::path write_run_directory(const LoopReport& report,
                                          const std::filesystem::path& out) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  auto dir = out / ("run-seed" + std::to_string(report.config.seed) + "-" + stamp);
  // Two runs inside one second get distinct directories.
  for (int suffix = 1; std::filesystem::exists(dir); ++suffix) {
    dir = out / ("run-seed" + std::to_string(report.config.seed) + "-" + stamp + "-" +
                 std::to_string(suffix));
  }
  write_text_file(dir / "report.json", report.to_json());
  for (const auto& it : report.iterations) {
    write_text_file(dir / ("selection-" + std::to_string(it.index) + ".csv"),
                    select::format_selection_csv(it.selection));
  }
  return dir;
}

}  // namespace worthiness::loop
