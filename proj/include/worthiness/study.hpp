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

// Two-alternative forced choice sessions over gMAD pair sets. Every accepted
// response increments the comparison count of the model it favors; the live
// ranking is the Perron ranking of the smoothed counts. State is event
// sourced: an append-only JSONL log plus periodic snapshots.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "worthiness/gmad.hpp"
#include "worthiness/ingest.hpp"
#include "worthiness/ranking.hpp"

namespace worthiness::study {

struct PairSet {
  std::string id;
  std::vector<gmad::GmadPair> pairs;
  // Image id to file path; every image of every pair must be present.
  std::map<ImageId, std::filesystem::path> image_paths;

  // Sorted attacker and defender ids.
  std::vector<ModelId> models() const;
};

// Builds a pair set whose image paths come from the manifest; relative paths
// resolve against `base_dir`. UnknownImage when a pair image has no path.
PairSet make_pair_set(std::string id, std::vector<gmad::GmadPair> pairs,
                      const CorpusManifest& manifest, const std::filesystem::path& base_dir);

enum class Choice { kLeft, kRight };
std::string_view choice_name(Choice choice);
Choice parse_choice(std::string_view text);

struct Response {
  Choice choice = Choice::kLeft;
  double response_ms = 0.0;
  std::string response_id;
};

struct Session {
  std::string id;
  std::string pair_set_id;
  std::string subject_id;
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;  // temporal order of pair indices
  std::vector<bool> x_on_left;     // spatial orientation per pair index
  std::map<std::size_t, Response> responses;

  bool done() const { return responses.size() == order.size(); }
};

// Seeded shuffle of the pair indices and an independent fair coin per pair for
// the side that shows x.
void schedule_session(Session& session, std::size_t pair_count);

struct SessionDescriptor {
  std::string session_id;
  std::size_t total_pairs = 0;
};

struct NextPair {
  bool done = false;
  std::size_t pair_index = 0;
  ImageId left_image;
  ImageId right_image;
};

struct ResponseOutcome {
  bool replayed = false;  // same response_id seen before; nothing changed
  ModelId winner;         // row of the incremented count
  ModelId loser;
};

// Persistence sink. Events are appended as single JSON lines and flushed
// before the mutation they describe becomes visible.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  void append(const std::string& json_line);
  const std::filesystem::path& path() const { return path_; }
  std::size_t appended() const { return appended_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t appended_ = 0;
};

class StudyState {
 public:
  StudyState() = default;
  StudyState(const StudyState&) = delete;
  StudyState& operator=(const StudyState&) = delete;

  void add_pair_set(PairSet pair_set);

  // Seed defaults to one derived from the session counter.
  SessionDescriptor create_session(const std::string& pair_set_id, const std::string& subject_id,
                                   std::optional<std::uint64_t> seed = std::nullopt);
  NextPair next_pair(const std::string& session_id) const;
  ResponseOutcome record_response(const std::string& session_id, std::size_t pair_index,
                                  Choice choice, double response_ms,
                                  const std::string& response_id);

  ranking::ComparisonMatrix export_matrix(const std::string& pair_set_id) const;
  ranking::RankingResult live_ranking(const std::string& pair_set_id,
                                      double epsilon = ranking::kDefaultEpsilon,
                                      double tol = ranking::kDefaultTolerance) const;

  std::filesystem::path image_path(const ImageId& id) const;
  Session session(const std::string& session_id) const;
  std::size_t accepted_responses() const;

  // Event sourcing. Events written after attach_log() go to `log`; every
  // `snapshot_every` events a snapshot replaces `snapshot_path`.
  void attach_log(std::shared_ptr<EventLog> log, std::filesystem::path snapshot_path = {},
                  std::size_t snapshot_every = 100);
  // Applies one logged event. Pair sets must already be registered.
  void apply_event(std::string_view json_line);
  // Restores sessions from a snapshot file (if it exists) and then the log
  // events it does not cover. A torn final log line is ignored.
  void restore(const std::filesystem::path& log_path, const std::filesystem::path& snapshot_path);

  std::string snapshot_json() const;
  void load_snapshot_json(std::string_view text);
  std::size_t event_count() const;

 private:
  struct PairSetEntry {
    PairSet pair_set;
    ranking::ComparisonMatrix matrix;
  };

  SessionDescriptor create_session_locked(const std::string& pair_set_id,
                                          const std::string& subject_id,
                                          std::optional<std::uint64_t> seed,
                                          const std::string* forced_id);
  ResponseOutcome record_response_locked(const std::string& session_id, std::size_t pair_index,
                                         Choice choice, double response_ms,
                                         const std::string& response_id);
  void emit_locked(const std::string& line);
  void maybe_snapshot_locked();
  std::string snapshot_json_locked() const;
  const PairSetEntry& pair_set_locked(const std::string& id) const;
  const Session& session_locked(const std::string& id) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, PairSetEntry> pair_sets_;
  std::map<std::string, Session> sessions_;
  // response_id to (session, pair index)
  std::map<std::string, std::pair<std::string, std::size_t>> response_ids_;
  std::size_t session_counter_ = 0;
  std::size_t events_ = 0;
  std::shared_ptr<EventLog> log_;
  std::filesystem::path snapshot_path_;
  std::size_t snapshot_every_ = 100;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

// HTTP front end over a StudyState. Blocking; stop() from another thread.
class StudyServer {
 public:
  explicit StudyServer(StudyState& state);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Binds and returns the port; listen() then serves until stop().
  int bind(const ServerOptions& options);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for a domain error kind.
int http_status(ErrorKind kind);

}  // namespace worthiness::study
