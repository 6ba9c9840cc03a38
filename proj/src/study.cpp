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

#include "worthiness/study.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "worthiness/error.hpp"

namespace worthiness::study {

using nlohmann::json;

std::vector<ModelId> PairSet::models() const {
  std::set<ModelId> ids;
  for (const auto& p : pairs) {
    ids.insert(p.attacker);
    ids.insert(p.defender);
  }
  return {ids.begin(), ids.end()};
}

PairSet make_pair_set(std::string id, std::vector<gmad::GmadPair> pairs,
                      const CorpusManifest& manifest, const std::filesystem::path& base_dir) {
  PairSet set;
  set.id = std::move(id);
  set.pairs = std::move(pairs);
  for (const auto& p : set.pairs) {
    for (const auto* image : {&p.x, &p.y}) {
      if (!manifest.contains(*image) || !manifest.image(*image).path) {
        throw Error(ErrorKind::kUnknownImage, "pair image " + *image + " has no manifest path");
      }
      std::filesystem::path path(*manifest.image(*image).path);
      if (path.is_relative()) path = base_dir / path;
      set.image_paths.emplace(*image, path);
    }
  }
  return set;
}

std::string_view choice_name(Choice choice) { return choice == Choice::kLeft ? "left" : "right"; }

Choice parse_choice(std::string_view text) {
  if (text == "left") return Choice::kLeft;
  if (text == "right") return Choice::kRight;
  throw Error(ErrorKind::kInvalidValue, "choice must be \"left\" or \"right\"");
}

void schedule_session(Session& session, std::size_t pair_count) {
  std::mt19937_64 rng(session.seed);
  session.order.resize(pair_count);
  std::iota(session.order.begin(), session.order.end(), std::size_t{0});
  // Fisher-Yates with explicit draws so the schedule does not depend on the
  // standard library's shuffle.
  for (std::size_t i = pair_count; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(session.order[i - 1], session.order[pick(rng)]);
  }
  std::bernoulli_distribution coin(0.5);
  session.x_on_left.resize(pair_count);
  for (std::size_t i = 0; i < pair_count; ++i) session.x_on_left[i] = coin(rng);
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // Drop a torn final line left by a crash so later appends stay well formed.
  if (std::filesystem::exists(path_)) {
    const auto text = read_text_file(path_);
    const auto keep = text.rfind('\n');
    const std::size_t size = keep == std::string::npos ? 0 : keep + 1;
    if (size != text.size()) std::filesystem::resize_file(path_, size);
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(ErrorKind::kIo, "cannot open event log " + path_.string());
}

void EventLog::append(const std::string& json_line) {
  out_ << json_line << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorKind::kIo, "cannot append to event log " + path_.string());
  ++appended_;
}

void StudyState::add_pair_set(PairSet pair_set) {
  if (pair_set.pairs.empty()) throw Error(ErrorKind::kShapeError, "pair set " + pair_set.id + " is empty");
  for (const auto& p : pair_set.pairs) {
    for (const auto* image : {&p.x, &p.y}) {
      if (!pair_set.image_paths.count(*image)) {
        throw Error(ErrorKind::kUnknownImage, "no path for pair image " + *image);
      }
    }
    if (p.attacker == p.defender) {
      throw Error(ErrorKind::kInvalidValue, "pair pits model " + p.attacker + " against itself");
    }
  }
  std::unique_lock lock(mutex_);
  if (pair_sets_.count(pair_set.id)) {
    throw Error(ErrorKind::kDuplicateEntry, "pair set " + pair_set.id + " already registered");
  }
  ranking::ComparisonMatrix matrix(pair_set.models());
  auto id = pair_set.id;
  pair_sets_.emplace(std::move(id), PairSetEntry{std::move(pair_set), std::move(matrix)});
}

const StudyState::PairSetEntry& StudyState::pair_set_locked(const std::string& id) const {
  auto it = pair_sets_.find(id);
  if (it == pair_sets_.end()) throw Error(ErrorKind::kUnknownPairSet, "unknown pair set " + id);
  return it->second;
}

const Session& StudyState::session_locked(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::kUnknownSession, "unknown session " + id);
  return it->second;
}

namespace {

std::string session_name(std::size_t counter) {
  auto n = std::to_string(counter);
  if (n.size() < 6) n.insert(0, 6 - n.size(), '0');
  return "s" + n;
}

std::uint64_t default_seed(std::size_t counter) {
  std::uint64_t z = 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SessionDescriptor StudyState::create_session_locked(const std::string& pair_set_id,
                                                    const std::string& subject_id,
                                                    std::optional<std::uint64_t> seed,
                                                    const std::string* forced_id) {
  const auto& entry = pair_set_locked(pair_set_id);
  Session s;
  if (forced_id) {
    s.id = *forced_id;
    if (sessions_.count(s.id)) throw Error(ErrorKind::kDuplicateEntry, "session " + s.id + " exists");
  } else {
    do {
      s.id = session_name(++session_counter_);
    } while (sessions_.count(s.id));
  }
  s.pair_set_id = pair_set_id;
  s.subject_id = subject_id;
  s.seed = seed ? *seed : default_seed(session_counter_);
  schedule_session(s, entry.pair_set.pairs.size());
  SessionDescriptor d{s.id, s.order.size()};
  sessions_.emplace(s.id, std::move(s));
  return d;
}

void StudyState::emit_locked(const std::string& line) {
  if (log_) log_->append(line);
}

void StudyState::maybe_snapshot_locked() {
  if (!log_ || snapshot_path_.empty() || events_ % snapshot_every_ != 0) return;
  // Write then rename so a crash never leaves a half-written snapshot.
  const auto tmp = snapshot_path_.string() + ".tmp";
  write_text_file(tmp, snapshot_json_locked());
  std::filesystem::rename(tmp, snapshot_path_);
}

SessionDescriptor StudyState::create_session(const std::string& pair_set_id,
                                             const std::string& subject_id,
                                             std::optional<std::uint64_t> seed) {
  std::unique_lock lock(mutex_);
  pair_set_locked(pair_set_id);
  // Resolve the id and seed first so the logged event replays to the same
  // session.
  std::size_t counter = session_counter_;
  std::string id;
  do {
    id = session_name(++counter);
  } while (sessions_.count(id));
  const std::uint64_t actual_seed = seed ? *seed : default_seed(counter);
  json event{{"type", "session"},
             {"session_id", id},
             {"pair_set_id", pair_set_id},
             {"subject_id", subject_id},
             {"seed", actual_seed}};
  emit_locked(event.dump());
  session_counter_ = counter;
  auto d = create_session_locked(pair_set_id, subject_id, actual_seed, &id);
  ++events_;
  maybe_snapshot_locked();
  return d;
}

NextPair StudyState::next_pair(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto& s = session_locked(session_id);
  const auto& entry = pair_set_locked(s.pair_set_id);
  for (const auto index : s.order) {
    if (s.responses.count(index)) continue;
    const auto& pair = entry.pair_set.pairs[index];
    NextPair next;
    next.pair_index = index;
    next.left_image = s.x_on_left[index] ? pair.x : pair.y;
    next.right_image = s.x_on_left[index] ? pair.y : pair.x;
    return next;
  }
  NextPair done;
  done.done = true;
  return done;
}

ResponseOutcome StudyState::record_response_locked(const std::string& session_id,
                                                   std::size_t pair_index, Choice choice,
                                                   double response_ms,
                                                   const std::string& response_id) {
  auto& s = sessions_.at(session_id);
  auto& entry = pair_sets_.at(s.pair_set_id);
  const auto& pair = entry.pair_set.pairs[pair_index];
  const bool chose_x = (choice == Choice::kLeft) == s.x_on_left[pair_index];
  ResponseOutcome out;
  out.winner = chose_x ? pair.attacker : pair.defender;
  out.loser = chose_x ? pair.defender : pair.attacker;
  auto& m = entry.matrix;
  ++m.at(m.index_of(out.winner), m.index_of(out.loser));
  s.responses.emplace(pair_index, Response{choice, response_ms, response_id});
  response_ids_.emplace(response_id, std::make_pair(session_id, pair_index));
  return out;
}

ResponseOutcome StudyState::record_response(const std::string& session_id,
                                            std::size_t pair_index, Choice choice,
                                            double response_ms, const std::string& response_id) {
  std::unique_lock lock(mutex_);
  const auto& s = session_locked(session_id);
  if (pair_index >= s.order.size()) {
    throw Error(ErrorKind::kInvalidPair, "pair index " + std::to_string(pair_index) +
                                             " out of range for " + std::to_string(s.order.size()) +
                                             " pairs");
  }
  if (response_id.empty()) throw Error(ErrorKind::kInvalidValue, "response_id must be nonempty");
  if (!std::isfinite(response_ms) || response_ms < 0.0) {
    throw Error(ErrorKind::kInvalidValue, "response_ms must be a nonnegative real");
  }
  if (auto seen = response_ids_.find(response_id); seen != response_ids_.end()) {
    if (seen->second == std::make_pair(session_id, pair_index)) {
      ResponseOutcome out;
      out.replayed = true;
      return out;
    }
    throw Error(ErrorKind::kDuplicateResponse,
                "response_id " + response_id + " already used for another pair");
  }
  if (s.responses.count(pair_index)) {
    throw Error(ErrorKind::kDuplicateResponse,
                "pair " + std::to_string(pair_index) + " already answered in session " + session_id);
  }
  json event{{"type", "response"},
             {"session_id", session_id},
             {"pair_index", pair_index},
             {"choice", std::string(choice_name(choice))},
             {"response_ms", response_ms},
             {"response_id", response_id}};
  emit_locked(event.dump());
  auto out = record_response_locked(session_id, pair_index, choice, response_ms, response_id);
  ++events_;
  maybe_snapshot_locked();
  return out;
}

ranking::ComparisonMatrix StudyState::export_matrix(const std::string& pair_set_id) const {
  std::shared_lock lock(mutex_);
  return pair_set_locked(pair_set_id).matrix;
}

ranking::RankingResult StudyState::live_ranking(const std::string& pair_set_id, double epsilon,
                                                double tol) const {
  const auto matrix = export_matrix(pair_set_id);
  return ranking::perron_rank(ranking::smooth_dominance(matrix, epsilon), tol);
}

std::filesystem::path StudyState::image_path(const ImageId& id) const {
  std::shared_lock lock(mutex_);
  for (const auto& [_, entry] : pair_sets_) {
    auto it = entry.pair_set.image_paths.find(id);
    if (it != entry.pair_set.image_paths.end()) return it->second;
  }
  throw Error(ErrorKind::kUnknownImage, "unknown image " + id);
}

Session StudyState::session(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return session_locked(session_id);
}

std::size_t StudyState::accepted_responses() const {
  std::shared_lock lock(mutex_);
  return response_ids_.size();
}

std::size_t StudyState::event_count() const {
  std::shared_lock lock(mutex_);
  return events_;
}

void StudyState::attach_log(std::shared_ptr<EventLog> log, std::filesystem::path snapshot_path,
                            std::size_t snapshot_every) {
  if (snapshot_every == 0) throw Error(ErrorKind::kInvalidValue, "snapshot interval must be positive");
  std::unique_lock lock(mutex_);
  log_ = std::move(log);
  snapshot_path_ = std::move(snapshot_path);
  snapshot_every_ = snapshot_every;
}

void StudyState::apply_event(std::string_view json_line) {
  json event;
  try {
    event = json::parse(json_line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("malformed event: ") + e.what());
  }
  std::unique_lock lock(mutex_);
  try {
    const auto type = event.at("type").get<std::string>();
    if (type == "session") {
      const auto id = event.at("session_id").get<std::string>();
      create_session_locked(event.at("pair_set_id").get<std::string>(),
                            event.at("subject_id").get<std::string>(),
                            event.at("seed").get<std::uint64_t>(), &id);
      // Keep generated ids ahead of replayed ones.
      if (id.size() > 1 && id[0] == 's' &&
          id.find_first_not_of("0123456789", 1) == std::string::npos) {
        session_counter_ = std::max<std::size_t>(session_counter_, std::stoull(id.substr(1)));
      }
    } else if (type == "response") {
      const auto session_id = event.at("session_id").get<std::string>();
      const auto& s = session_locked(session_id);
      const auto index = event.at("pair_index").get<std::size_t>();
      const auto response_id = event.at("response_id").get<std::string>();
      if (index >= s.order.size()) throw Error(ErrorKind::kInvalidPair, "logged pair index out of range");
      if (s.responses.count(index) || response_ids_.count(response_id)) {
        throw Error(ErrorKind::kDuplicateResponse, "log repeats a response");
      }
      record_response_locked(session_id, index, parse_choice(event.at("choice").get<std::string>()),
                             event.at("response_ms").get<double>(), response_id);
    } else {
      throw Error(ErrorKind::kSchemaError, "unknown event type " + type);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("malformed event: ") + e.what());
  }
  ++events_;
}

std::string StudyState::snapshot_json() const {
  std::shared_lock lock(mutex_);
  return snapshot_json_locked();
}

std::string StudyState::snapshot_json_locked() const {
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) {
    json responses = json::array();
    for (const auto& [index, r] : s.responses) {
      responses.push_back({{"pair_index", index},
                           {"choice", std::string(choice_name(r.choice))},
                           {"response_ms", r.response_ms},
                           {"response_id", r.response_id}});
    }
    sessions.push_back({{"session_id", id},
                        {"pair_set_id", s.pair_set_id},
                        {"subject_id", s.subject_id},
                        {"seed", s.seed},
                        {"responses", std::move(responses)}});
  }
  json doc{{"events", events_}, {"session_counter", session_counter_}, {"sessions", sessions}};
  return doc.dump() + "\n";
}

void StudyState::load_snapshot_json(std::string_view text) {
  std::unique_lock lock(mutex_);
  try {
    const auto doc = json::parse(text);
    sessions_.clear();
    response_ids_.clear();
    for (auto& [_, entry] : pair_sets_) entry.matrix = ranking::ComparisonMatrix(entry.pair_set.models());
    for (const auto& s : doc.at("sessions")) {
      const auto id = s.at("session_id").get<std::string>();
      create_session_locked(s.at("pair_set_id").get<std::string>(),
                            s.at("subject_id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                            &id);
      for (const auto& r : s.at("responses")) {
        const auto index = r.at("pair_index").get<std::size_t>();
        if (index >= sessions_.at(id).order.size()) {
          throw Error(ErrorKind::kInvalidPair, "snapshot pair index out of range");
        }
        record_response_locked(id, index, parse_choice(r.at("choice").get<std::string>()),
                               r.at("response_ms").get<double>(),
                               r.at("response_id").get<std::string>());
      }
    }
    session_counter_ = doc.at("session_counter").get<std::size_t>();
    events_ = doc.at("events").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("malformed snapshot: ") + e.what());
  }
}

void StudyState::restore(const std::filesystem::path& log_path,
                         const std::filesystem::path& snapshot_path) {
  if (!snapshot_path.empty() && std::filesystem::exists(snapshot_path)) {
    load_snapshot_json(read_text_file(snapshot_path));
  }
  if (!std::filesystem::exists(log_path)) return;
  const auto text = read_text_file(log_path);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const std::size_t covered = event_count();
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    if (end == std::string::npos) break;  // torn final line
    const auto line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (++line_no <= covered) continue;
    apply_event(line);
  }
}

}  // namespace worthiness::study
