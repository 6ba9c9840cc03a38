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

#include <fstream>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "support.hpp"
#include "worthiness/ranking.hpp"
#include "worthiness/study.hpp"
#include "worthiness/synthetic.hpp"

namespace worthiness::study {
namespace {

using json = nlohmann::json;

// Ten pairs over three models: p0..p9 with images xi / yi.
PairSet ten_pair_set(const std::filesystem::path& dir, const std::string& id = "main") {
  PairSet set;
  set.id = id;
  const char* models[] = {"m1", "m2", "m3"};
  for (std::size_t i = 0; i < 10; ++i) {
    gmad::GmadPair p;
    p.attacker = models[i % 3];
    p.defender = models[(i + 1) % 3];
    p.level = i % 2;
    p.x = "x" + std::to_string(i);
    p.y = "y" + std::to_string(i);
    p.attacker_gap = 1.0;
    set.pairs.push_back(p);
    for (const auto& img : {p.x, p.y}) {
      const auto path = dir / (img + ".bmp");
      if (!std::filesystem::exists(path)) write_text_file(path, synthetic::flat_bmp(static_cast<unsigned char>(i * 20)));
      set.image_paths[img] = path;
    }
  }
  return set;
}

// The side that shows the attacker-preferred image x for pair `index`.
Choice side_of_x(const Session& s, std::size_t index) {
  return s.x_on_left[index] ? Choice::kLeft : Choice::kRight;
}
Choice other(Choice c) { return c == Choice::kLeft ? Choice::kRight : Choice::kLeft; }

class StudyStateTest : public ::testing::Test {
 protected:
  StudyStateTest() : dir_("study") { state_.add_pair_set(ten_pair_set(dir_.path())); }
  testing::ScratchDir dir_;
  StudyState state_;
};

TEST_F(StudyStateTest, CreateSession) {
  const auto d = state_.create_session("main", "subject-1", 4);
  EXPECT_EQ(d.total_pairs, 10u);
  EXPECT_FALSE(d.session_id.empty());
  EXPECT_ERROR_KIND(state_.create_session("nope", "s"), ErrorKind::kUnknownPairSet);
}

TEST_F(StudyStateTest, SchedulesDependOnlyOnSeed) {
  const auto a = state_.session(state_.create_session("main", "s1", 11).session_id);
  const auto b = state_.session(state_.create_session("main", "s2", 11).session_id);
  const auto c = state_.session(state_.create_session("main", "s3", 12).session_id);
  EXPECT_EQ(a.order, b.order);
  EXPECT_EQ(a.x_on_left, b.x_on_left);
  EXPECT_TRUE(a.order != c.order || a.x_on_left != c.x_on_left);
  std::vector<std::size_t> sorted = a.order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);

  Session direct;
  direct.seed = 11;
  schedule_session(direct, 10);
  EXPECT_EQ(direct.order, a.order);
  EXPECT_EQ(direct.x_on_left, a.x_on_left);
}

TEST_F(StudyStateTest, NextPairFollowsOrderAndOrientation) {
  const auto id = state_.create_session("main", "s", 3).session_id;
  const auto s = state_.session(id);
  const auto first = state_.next_pair(id);
  EXPECT_FALSE(first.done);
  EXPECT_EQ(first.pair_index, s.order[0]);
  const auto& pair = ten_pair_set(dir_.path()).pairs[first.pair_index];
  EXPECT_EQ(first.left_image, s.x_on_left[first.pair_index] ? pair.x : pair.y);
  EXPECT_EQ(first.right_image, s.x_on_left[first.pair_index] ? pair.y : pair.x);
  // No time limit: asking again returns the same payload.
  const auto again = state_.next_pair(id);
  EXPECT_EQ(again.pair_index, first.pair_index);
  EXPECT_EQ(again.left_image, first.left_image);

  for (std::size_t k = 0; k < 10; ++k) {
    const auto next = state_.next_pair(id);
    ASSERT_FALSE(next.done);
    EXPECT_EQ(next.pair_index, s.order[k]);
    state_.record_response(id, next.pair_index, Choice::kLeft, 500, "r" + std::to_string(k));
  }
  EXPECT_TRUE(state_.next_pair(id).done);
  EXPECT_TRUE(state_.session(id).done());
  EXPECT_ERROR_KIND(state_.next_pair("s999"), ErrorKind::kUnknownSession);
}

TEST_F(StudyStateTest, ChoiceMapsThroughOrientation) {
  const auto id = state_.create_session("main", "s", 8).session_id;
  const auto s = state_.session(id);
  const auto pairs = ten_pair_set(dir_.path()).pairs;
  // Pair 0 answered for x, pair 1 answered for y.
  auto out = state_.record_response(id, 0, side_of_x(s, 0), 100, "a");
  EXPECT_EQ(out.winner, pairs[0].attacker);
  EXPECT_EQ(out.loser, pairs[0].defender);
  out = state_.record_response(id, 1, other(side_of_x(s, 1)), 100, "b");
  EXPECT_EQ(out.winner, pairs[1].defender);
  const auto m = state_.export_matrix("main");
  EXPECT_EQ(m.at(m.index_of(pairs[0].attacker), m.index_of(pairs[0].defender)), 1u);
  EXPECT_EQ(m.at(m.index_of(pairs[1].defender), m.index_of(pairs[1].attacker)), 1u);
  EXPECT_EQ(m.total(), 2u);
}

TEST_F(StudyStateTest, ReplayIsIdempotent) {
  const auto id = state_.create_session("main", "s", 1).session_id;
  const auto first = state_.record_response(id, 2, Choice::kLeft, 300, "resp-1");
  EXPECT_FALSE(first.replayed);
  const auto before = state_.export_matrix("main");
  const auto second = state_.record_response(id, 2, Choice::kLeft, 300, "resp-1");
  EXPECT_TRUE(second.replayed);
  EXPECT_EQ(state_.export_matrix("main"), before);
  EXPECT_EQ(state_.accepted_responses(), 1u);
}

TEST_F(StudyStateTest, RejectsBadResponses) {
  const auto id = state_.create_session("main", "s", 1).session_id;
  state_.record_response(id, 2, Choice::kLeft, 300, "resp-1");
  EXPECT_ERROR_KIND(state_.record_response(id, 2, Choice::kRight, 300, "resp-2"), ErrorKind::kDuplicateResponse);
  EXPECT_ERROR_KIND(state_.record_response(id, 3, Choice::kRight, 300, "resp-1"), ErrorKind::kDuplicateResponse);
  EXPECT_ERROR_KIND(state_.record_response(id, 10, Choice::kRight, 300, "resp-3"), ErrorKind::kInvalidPair);
  EXPECT_ERROR_KIND(state_.record_response("s404", 1, Choice::kRight, 300, "resp-4"), ErrorKind::kUnknownSession);
  EXPECT_ERROR_KIND(state_.record_response(id, 1, Choice::kRight, -1, "resp-5"), ErrorKind::kInvalidValue);
  EXPECT_ERROR_KIND(state_.record_response(id, 1, Choice::kRight, 1, ""), ErrorKind::kInvalidValue);
  EXPECT_EQ(state_.export_matrix("main").total(), 1u);
}

TEST_F(StudyStateTest, MatrixTotalsAndDiagonal) {
  EXPECT_EQ(state_.export_matrix("main").total(), 0u);
  const auto a = state_.create_session("main", "s1", 1).session_id;
  const auto b = state_.create_session("main", "s2", 2).session_id;
  for (std::size_t i = 0; i < 4; ++i) state_.record_response(a, i, Choice::kLeft, 10, "a" + std::to_string(i));
  for (std::size_t i = 0; i < 3; ++i) state_.record_response(b, i, Choice::kRight, 10, "b" + std::to_string(i));
  const auto m = state_.export_matrix("main");
  EXPECT_EQ(m.total(), 7u);
  EXPECT_EQ(m.total(), state_.accepted_responses());
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.at(i, i), 0u);
  EXPECT_ERROR_KIND(state_.export_matrix("zzz"), ErrorKind::kUnknownPairSet);
}

TEST_F(StudyStateTest, LiveRanking) {
  const auto zero = state_.live_ranking("main");
  for (double w : zero.weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-12);

  const auto id = state_.create_session("main", "s", 5).session_id;
  const auto s = state_.session(id);
  for (std::size_t i = 0; i < 10; ++i) state_.record_response(id, i, side_of_x(s, i), 10, "r" + std::to_string(i));
  const auto m = state_.export_matrix("main");
  const auto offline = ranking::perron_rank(ranking::smooth_dominance(ranking::parse_matrix_csv(ranking::format_matrix_csv(m))));
  EXPECT_EQ(state_.live_ranking("main").weights, offline.weights);
}

TEST(StudyRanking, DominantModelWinsTwoModelCase) {
  testing::ScratchDir dir("study2");
  PairSet set;
  set.id = "duel";
  for (std::size_t i = 0; i < 6; ++i) {
    gmad::GmadPair p{i % 2 ? "B" : "A", i % 2 ? "A" : "B", 0, "x" + std::to_string(i), "y" + std::to_string(i), 1.0, 0.0};
    set.pairs.push_back(p);
    set.image_paths[p.x] = dir / "img.bmp";
    set.image_paths[p.y] = dir / "img.bmp";
  }
  StudyState state;
  state.add_pair_set(set);
  const auto id = state.create_session("duel", "s", 0).session_id;
  const auto s = state.session(id);
  // Model A wins every comparison: pick x when A attacks, y when A defends.
  for (std::size_t i = 0; i < 6; ++i) {
    const Choice c = set.pairs[i].attacker == "A" ? side_of_x(s, i) : other(side_of_x(s, i));
    EXPECT_EQ(state.record_response(id, i, c, 1, "r" + std::to_string(i)).winner, "A");
  }
  const auto r = state.live_ranking("duel");
  EXPECT_GT(r.weights[0], r.weights[1]);
}

TEST_F(StudyStateTest, LogReplayReconstructsState) {
  const auto log_path = dir_ / "events.jsonl";
  const auto snap_path = dir_ / "snapshot.json";
  auto log = std::make_shared<EventLog>(log_path);
  state_.attach_log(log, snap_path, 4);
  const auto a = state_.create_session("main", "s1", 9).session_id;
  const auto b = state_.create_session("main", "s2").session_id;
  for (std::size_t i = 0; i < 5; ++i) state_.record_response(a, i, Choice::kLeft, 10, "a" + std::to_string(i));
  state_.record_response(a, 0, Choice::kLeft, 10, "a0");  // replay, not logged twice
  for (std::size_t i = 0; i < 4; ++i) state_.record_response(b, 9 - i, Choice::kRight, 10, "b" + std::to_string(i));
  EXPECT_EQ(state_.event_count(), 11u);
  EXPECT_TRUE(std::filesystem::exists(snap_path));

  // From the log alone.
  {
    StudyState fresh;
    fresh.add_pair_set(ten_pair_set(dir_.path()));
    fresh.restore(log_path, dir_ / "no-snapshot.json");
    EXPECT_EQ(fresh.export_matrix("main"), state_.export_matrix("main"));
    EXPECT_EQ(fresh.snapshot_json(), state_.snapshot_json());
  }
  // From snapshot plus the log tail.
  {
    StudyState fresh;
    fresh.add_pair_set(ten_pair_set(dir_.path()));
    fresh.restore(log_path, snap_path);
    EXPECT_EQ(fresh.export_matrix("main"), state_.export_matrix("main"));
    EXPECT_EQ(fresh.session(b).responses.size(), 4u);
    // Counters continue where the original left off.
    EXPECT_EQ(fresh.create_session("main", "s3").session_id, state_.create_session("main", "s3").session_id);
  }
}

TEST_F(StudyStateTest, TornLogTailIgnored) {
  const auto log_path = dir_ / "events.jsonl";
  {
    auto log = std::make_shared<EventLog>(log_path);
    state_.attach_log(log);
    const auto a = state_.create_session("main", "s1", 9).session_id;
    state_.record_response(a, 0, Choice::kLeft, 10, "a0");
  }
  {
    std::ofstream out(log_path, std::ios::app);
    out << R"({"type":"response","session)";
  }
  StudyState fresh;
  fresh.add_pair_set(ten_pair_set(dir_.path()));
  fresh.restore(log_path, dir_ / "none.json");
  EXPECT_EQ(fresh.export_matrix("main").total(), 1u);
  // Reopening the log for append drops the torn line.
  auto reopened = std::make_shared<EventLog>(log_path);
  fresh.attach_log(reopened);
  fresh.record_response("s000001", 1, Choice::kLeft, 10, "a1");
  StudyState again;
  again.add_pair_set(ten_pair_set(dir_.path()));
  again.restore(log_path, dir_ / "none.json");
  EXPECT_EQ(again.export_matrix("main").total(), 2u);
}

TEST_F(StudyStateTest, ConcurrentSessions) {
  constexpr int kThreads = 4;
  std::vector<std::string> ids;
  for (int t = 0; t < kThreads; ++t) ids.push_back(state_.create_session("main", "s" + std::to_string(t)).session_id);
  std::vector<std::thread> workers;
  for (int t = 0; t < kThreads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = 0; i < 10; ++i) {
        state_.record_response(ids[t], i, i % 2 ? Choice::kLeft : Choice::kRight, 5,
                               "t" + std::to_string(t) + "-" + std::to_string(i));
        state_.record_response(ids[t], i, i % 2 ? Choice::kLeft : Choice::kRight, 5,
                               "t" + std::to_string(t) + "-" + std::to_string(i));
        (void)state_.live_ranking("main");
      }
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(state_.export_matrix("main").total(), 40u);
  EXPECT_EQ(state_.accepted_responses(), 40u);
}

TEST(PairSetBuild, FromManifest) {
  testing::ScratchDir dir("pairset");
  CorpusManifest m;
  m.images = {{"a", "img/a.bmp", Partition::kUnlabeled}, {"b", std::nullopt, Partition::kUnlabeled}};
  std::vector<gmad::GmadPair> ok{{"m1", "m2", 0, "a", "a", 0.0, 0.0}};
  const auto set = make_pair_set("p", ok, m, dir.path());
  EXPECT_EQ(set.image_paths.at("a"), dir.path() / "img/a.bmp");
  std::vector<gmad::GmadPair> bad{{"m1", "m2", 0, "a", "b", 0.0, 0.0}};
  EXPECT_ERROR_KIND(make_pair_set("p", bad, m, dir.path()), ErrorKind::kUnknownImage);
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(ErrorKind::kUnknownSession), 404);
  EXPECT_EQ(http_status(ErrorKind::kUnknownPairSet), 404);
  EXPECT_EQ(http_status(ErrorKind::kDuplicateResponse), 409);
  EXPECT_EQ(http_status(ErrorKind::kInvalidPair), 422);
  EXPECT_EQ(http_status(ErrorKind::kSchemaError), 400);
}

// Wire protocol, exercised with a real client over a loopback port.
class StudyHttpTest : public ::testing::Test {
 protected:
  StudyHttpTest() : dir_("http"), server_(state_) {
    state_.add_pair_set(ten_pair_set(dir_.path()));
    port_ = server_.bind({"127.0.0.1", 0});
    thread_ = std::thread([this] { server_.listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_connection_timeout(5);
    client_->set_read_timeout(10);
  }
  ~StudyHttpTest() override {
    server_.stop();
    thread_.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  testing::ScratchDir dir_;
  StudyState state_;
  StudyServer server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(StudyHttpTest, ScriptedSessionEndToEnd) {
  auto res = post("/api/sessions", {{"pair_set_id", "main"}, {"subject_id", "rater-1"}, {"seed", 42}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const auto created = json::parse(res->body);
  EXPECT_EQ(created.at("total_pairs"), 10);
  const std::string sid = created.at("session_id");

  std::size_t answered = 0;
  for (;;) {
    res = client_->Get("/api/sessions/" + sid + "/next");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto next = json::parse(res->body);
    if (next.value("done", false)) break;
    const std::string left = next.at("left_image_url");
    EXPECT_EQ(left.rfind("/images/", 0), 0u);
    auto img = client_->Get(left);
    ASSERT_TRUE(img);
    EXPECT_EQ(img->status, 200);
    EXPECT_EQ(img->get_header_value("Content-Type"), "image/bmp");
    EXPECT_EQ(img->body.substr(0, 2), "BM");

    const json body{{"pair_index", next.at("pair_index")},
                    {"choice", answered % 3 ? "left" : "right"},
                    {"response_ms", 850.5},
                    {"response_id", "resp-" + std::to_string(answered)}};
    res = post("/api/sessions/" + sid + "/responses", body);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    EXPECT_EQ(json::parse(res->body).at("accepted"), true);
    // Double submit of the same response id.
    res = post("/api/sessions/" + sid + "/responses", body);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    ++answered;
  }
  EXPECT_EQ(answered, 10u);

  res = client_->Get("/api/pairsets/main/matrix");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "text/csv");
  const auto matrix = ranking::parse_matrix_csv(res->body);
  EXPECT_EQ(matrix.total(), 10u);

  res = client_->Get("/api/pairsets/main/ranking?epsilon=1&tol=1e-10");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto ranked = json::parse(res->body).at("models");
  const auto offline = ranking::perron_rank(ranking::smooth_dominance(matrix, 1.0), 1e-10);
  const auto ranks = ranking::ranks_from_weights(offline.weights);
  ASSERT_EQ(ranked.size(), matrix.models.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    EXPECT_EQ(ranked[i].at("id"), matrix.models[i]);
    EXPECT_EQ(ranked[i].at("weight").get<double>(), offline.weights[i]);
    EXPECT_EQ(ranked[i].at("rank").get<std::size_t>(), ranks[i]);
  }
}

TEST_F(StudyHttpTest, ErrorStatuses) {
  auto res = post("/api/sessions", {{"pair_set_id", "ghost"}, {"subject_id", "x"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body).at("error"), "UnknownPairSet");

  res = client_->Get("/api/sessions/s999999/next");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body).at("error"), "UnknownSession");

  res = post("/api/sessions", {{"pair_set_id", "main"}, {"subject_id", "x"}});
  ASSERT_TRUE(res);
  const std::string sid = json::parse(res->body).at("session_id");
  const std::string responses = "/api/sessions/" + sid + "/responses";

  res = post(responses, {{"pair_index", 10}, {"choice", "left"}, {"response_ms", 1}, {"response_id", "q1"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(json::parse(res->body).at("error"), "InvalidPair");

  res = post(responses, {{"pair_index", 0}, {"choice", "left"}, {"response_ms", 1}, {"response_id", "q2"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = post(responses, {{"pair_index", 0}, {"choice", "right"}, {"response_ms", 1}, {"response_id", "q3"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(json::parse(res->body).at("error"), "DuplicateResponse");

  res = post(responses, {{"pair_index", 1}, {"choice", "equal"}, {"response_ms", 1}, {"response_id", "q4"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client_->Post(responses, "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client_->Get("/api/pairsets/ghost/matrix");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client_->Get("/api/pairsets/ghost/ranking");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client_->Get("/images/not-an-image");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(state_.export_matrix("main").total(), 1u);
}

}  // namespace
}  // namespace worthiness::study
