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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"
#include "support.hpp"
#include "worthiness/loop.hpp"
#include "worthiness/metrics.hpp"
#include "worthiness/synthetic.hpp"

namespace worthiness::loop {
namespace {

synthetic::Corpus small_loop_corpus(std::uint64_t seed) {
  synthetic::LoopCorpusOptions opts;
  opts.images = 500;
  opts.holdout = 120;
  opts.labeled_a = 40;
  opts.labeled_b = 6;
  opts.seed = seed;
  return synthetic::make_loop_corpus(opts);
}

LoopConfig quick_config(LoopSelector selector, std::size_t iterations, std::uint64_t seed) {
  LoopConfig c;
  c.iterations = iterations;
  c.budget = 20;
  c.selector = selector;
  c.seed = seed;
  c.failnet.projection_width = 16;
  c.failnet.epochs = 2;
  c.failnet.pairs_per_epoch = 400;
  c.failnet.learning_rate = 1e-3;
  return c;
}

TEST(StandinHead, NoiselessLinearFit) {
  // mos = 0.3 + w . concat(stages), exactly.
  auto store = testing::random_features(80, {3, 2}, 1, 4);
  const std::vector<double> w{0.5, -1.0, 2.0, 0.25, -0.75};
  std::map<ImageId, double> labels;
  for (const auto& [id, r] : store.records) {
    const auto x = r.concatenated_stages();
    double y = 0.3;
    for (std::size_t k = 0; k < w.size(); ++k) y += w[k] * x[k];
    labels[id] = y;
  }
  const auto ids = testing::ids_of(store);
  const std::vector<ImageId> train(ids.begin(), ids.begin() + 50);
  const auto head = fit_standin_head(train, store, labels, 1e-10);
  for (std::size_t i = 50; i < ids.size(); ++i) {
    EXPECT_NEAR(head.predict(store.at(ids[i])), labels[ids[i]], 1e-6);
  }
}

TEST(StandinHead, HugeRidgePredictsMean) {
  auto store = testing::random_features(40, {2, 2}, 1, 5);
  std::map<ImageId, double> labels;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  double mean = 0.0;
  for (const auto& [id, _] : store.records) {
    labels[id] = 2.0 + normal(rng);
    mean += labels[id] / 40.0;
  }
  const auto ids = testing::ids_of(store);
  const auto head = fit_standin_head(ids, store, labels, 1e9);
  for (double wk : head.weights) EXPECT_NEAR(wk, 0.0, 1e-3);
  for (const auto& id : ids) EXPECT_NEAR(head.predict(store.at(id)), mean, 1e-3);
}

TEST(StandinHead, DeterministicAndErrors) {
  auto store = testing::random_features(20, {2, 2}, 1, 6);
  std::map<ImageId, double> labels;
  double k = 0;
  for (const auto& [id, _] : store.records) labels[id] = std::sin(k += 1.0);
  const auto ids = testing::ids_of(store);
  EXPECT_EQ(fit_standin_head(ids, store, labels), fit_standin_head(ids, store, labels));
  EXPECT_ERROR_KIND(fit_standin_head({ids[0]}, store, labels), ErrorKind::kEmptyTrainingSet);
}

TEST(Oracle, LogsChannels) {
  MosTable mos;
  mos.values = {{"a", 1.0}, {"b", 2.0}};
  MosOracle oracle(mos);
  EXPECT_EQ(oracle.reveal({"b"}, 1).at("b"), 2.0);
  EXPECT_EQ(oracle.evaluate("a", 1), 1.0);
  ASSERT_EQ(oracle.log().size(), 2u);
  EXPECT_EQ(oracle.log()[0], (OracleRead{OracleChannel::kLabel, "b", 1}));
  EXPECT_EQ(oracle.log()[1], (OracleRead{OracleChannel::kEval, "a", 1}));
  EXPECT_ERROR_KIND(oracle.reveal({"zz"}, 1), ErrorKind::kUnknownImage);
}

TEST(Loop, DisjointSelectionsAndNoEarlyReads) {
  const auto c = small_loop_corpus(1);
  const auto part = LoopPartition::from_manifest(c.manifest);
  for (auto sel : {LoopSelector::kWorthiness, LoopSelector::kRandom, LoopSelector::kCoreset,
                   LoopSelector::kRd}) {
    SCOPED_TRACE(std::string(loop_selector_name(sel)));
    MosOracle oracle(c.mos);
    const auto report = run_loop(c.features, part, oracle, quick_config(sel, 3, 2));
    ASSERT_EQ(report.iterations.size(), 3u);
    std::set<ImageId> seen;
    std::size_t total = 0;
    for (const auto& it : report.iterations) {
      for (const auto& id : it.selection.ids()) {
        seen.insert(id);
        ++total;
        EXPECT_NE(std::find(part.unlabeled.begin(), part.unlabeled.end(), id), part.unlabeled.end());
      }
    }
    EXPECT_EQ(seen.size(), total);
    EXPECT_EQ(total, 60u);
    EXPECT_EQ(report.iterations[1].pool_size, report.iterations[0].pool_size - 20);
    EXPECT_EQ(count_pre_reveal_reads(oracle.log(), part, report), 0u);
    EXPECT_EQ(report.iterations[0].failnet_loss.has_value(), sel == LoopSelector::kWorthiness);
  }
}

TEST(Loop, SingleIterationEqualsOnePass) {
  const auto c = small_loop_corpus(2);
  const auto part = LoopPartition::from_manifest(c.manifest);
  MosOracle oracle(c.mos);
  const auto report = run_loop(c.features, part, oracle, quick_config(LoopSelector::kCoreset, 1, 0));
  ASSERT_EQ(report.iterations.size(), 1u);

  // Hand-rolled select + evaluate + refit.
  std::map<ImageId, double> labels;
  for (const auto& id : part.labeled) labels[id] = c.mos.at(id);
  auto labeled = part.labeled;
  std::sort(labeled.begin(), labeled.end());
  const auto head = fit_standin_head(labeled, c.features, labels);
  auto pool = part.unlabeled;
  std::sort(pool.begin(), pool.end());
  const auto sel = select::coreset_select(pool, c.features, {20, select::kDefaultWorthinessLambda, 0});
  const auto eval = select::evaluate_selection(sel.ids(), pool, head.predict(c.features, pool), c.mos);
  for (const auto& id : sel.ids()) {
    labels[id] = c.mos.at(id);
    labeled.push_back(id);
  }
  std::sort(labeled.begin(), labeled.end());
  const auto refit = fit_standin_head(labeled, c.features, labels);
  std::vector<double> pred, truth;
  for (const auto& id : part.holdout) {
    pred.push_back(refit.predict(c.features.at(id)));
    truth.push_back(c.mos.at(id));
  }
  const auto& it = report.iterations[0];
  EXPECT_EQ(it.selection, sel);
  EXPECT_EQ(it.srcc_selected, eval.srcc_selected);
  EXPECT_EQ(it.srcc_rest, eval.srcc_rest);
  EXPECT_EQ(it.holdout_srcc, srcc(pred, truth));
}

TEST(Loop, PrefixOfLongerRun) {
  const auto c = small_loop_corpus(3);
  const auto part = LoopPartition::from_manifest(c.manifest);
  MosOracle o1(c.mos), o3(c.mos);
  const auto one = run_loop(c.features, part, o1, quick_config(LoopSelector::kWorthiness, 1, 9));
  const auto three = run_loop(c.features, part, o3, quick_config(LoopSelector::kWorthiness, 3, 9));
  EXPECT_EQ(one.iterations[0].selection, three.iterations[0].selection);
  EXPECT_EQ(one.iterations[0].holdout_srcc, three.iterations[0].holdout_srcc);
  EXPECT_EQ(one.initial_holdout_srcc, three.initial_holdout_srcc);
}

TEST(Loop, ReplayReproducesRecordedSrcc) {
  const auto c = small_loop_corpus(4);
  const auto part = LoopPartition::from_manifest(c.manifest);
  MosOracle oracle(c.mos);
  const auto report = run_loop(c.features, part, oracle, quick_config(LoopSelector::kWorthiness, 3, 5));
  std::map<ImageId, double> labels;
  for (const auto& id : part.labeled) labels[id] = c.mos.at(id);
  auto labeled = part.labeled;
  std::set<ImageId> pool(part.unlabeled.begin(), part.unlabeled.end());
  for (const auto& it : report.iterations) {
    std::sort(labeled.begin(), labeled.end());
    const auto head = fit_standin_head(labeled, c.features, labels);
    const std::vector<ImageId> current(pool.begin(), pool.end());
    const auto eval = select::evaluate_selection(it.selection.ids(), current,
                                                 head.predict(c.features, current), c.mos);
    EXPECT_EQ(eval.srcc_selected, it.srcc_selected) << it.index;
    EXPECT_EQ(eval.srcc_rest, it.srcc_rest) << it.index;
    for (const auto& id : it.selection.ids()) {
      labels[id] = c.mos.at(id);
      labeled.push_back(id);
      pool.erase(id);
    }
  }
}

TEST(Loop, Deterministic) {
  const auto c = small_loop_corpus(5);
  const auto part = LoopPartition::from_manifest(c.manifest);
  MosOracle a(c.mos), b(c.mos);
  const auto cfg = quick_config(LoopSelector::kWorthiness, 2, 1);
  EXPECT_EQ(run_loop(c.features, part, a, cfg).to_json(), run_loop(c.features, part, b, cfg).to_json());
  EXPECT_EQ(a.log(), b.log());
}

TEST(Loop, BudgetExceedsPoolAtOffendingIteration) {
  const auto c = small_loop_corpus(6);
  auto part = LoopPartition::from_manifest(c.manifest);
  part.unlabeled.resize(50);
  auto cfg = quick_config(LoopSelector::kRandom, 3, 0);
  MosOracle oracle(c.mos);
  try {
    run_loop(c.features, part, oracle, cfg);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBudgetExceedsPool);
    EXPECT_NE(std::string(e.what()).find("iteration 3"), std::string::npos) << e.what();
  }
}

TEST(Loop, LabelNoiseOnlyTouchesLabels) {
  const auto c = small_loop_corpus(7);
  const auto part = LoopPartition::from_manifest(c.manifest);
  auto cfg = quick_config(LoopSelector::kRandom, 1, 0);
  MosOracle clean(c.mos), noisy(c.mos, 0.5, 3);
  const auto a = run_loop(c.features, part, clean, cfg);
  const auto b = run_loop(c.features, part, noisy, cfg);
  EXPECT_EQ(a.iterations[0].selection, b.iterations[0].selection);
  EXPECT_NE(a.initial_holdout_srcc, b.initial_holdout_srcc);
}

TEST(Loop, ReportJsonAndRunDirectory) {
  const auto c = small_loop_corpus(8);
  const auto part = LoopPartition::from_manifest(c.manifest);
  MosOracle oracle(c.mos);
  const auto report = run_loop(c.features, part, oracle, quick_config(LoopSelector::kRandom, 2, 0));
  const auto doc = nlohmann::json::parse(report.to_json());
  EXPECT_EQ(doc.at("iterations").size(), 2u);
  EXPECT_TRUE(doc.at("iterations")[0].at("failnet_loss").is_null());
  testing::ScratchDir dir("loop");
  const auto run = write_run_directory(report, dir.path());
  EXPECT_EQ(run.parent_path(), dir.path());
  EXPECT_EQ(run.filename().string().rfind("run-seed0-", 0), 0u);
  EXPECT_EQ(read_text_file(run / "report.json"), report.to_json());
  EXPECT_EQ(read_text_file(run / "selection-1.csv"), select::format_selection_csv(report.iterations[0].selection));
  EXPECT_TRUE(std::filesystem::exists(run / "selection-2.csv"));
  const auto again = write_run_directory(report, dir.path());
  EXPECT_NE(again, run);
}

TEST(Config, Validation) {
  LoopConfig c;
  c.iterations = 0;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::kInvalidValue);
  EXPECT_EQ(parse_loop_selector("rd"), LoopSelector::kRd);
  EXPECT_ANY_THROW(parse_loop_selector("committee"));
}

}  // namespace
}  // namespace worthiness::loop
