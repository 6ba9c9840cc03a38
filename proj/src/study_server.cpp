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

#include <cmath>
#include <functional>

#include "httplib.h"
#include "json.hpp"
#include "worthiness/error.hpp"
#include "worthiness/study.hpp"

namespace worthiness::study {

using nlohmann::json;

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownSession:
    case ErrorKind::kUnknownPairSet:
    case ErrorKind::kUnknownImage:
      return 404;
    case ErrorKind::kDuplicateResponse:
      return 409;
    case ErrorKind::kInvalidPair:
      return 422;
    case ErrorKind::kIo:
    case ErrorKind::kNoConvergence:
      return 500;
    default:
      return 400;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view name, const std::string& msg) {
  send_json(res, status, json{{"error", name}, {"message", msg}});
}

// Runs a handler and maps failures onto the wire error format.
httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.kind()), e.name(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "SchemaError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body);
  if (!body.is_object()) throw Error(ErrorKind::kSchemaError, "request body must be a JSON object");
  return body;
}

std::string string_field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end() || !it->is_string()) {
    throw Error(ErrorKind::kSchemaError, std::string("field '") + name + "' must be a string");
  }
  return it->get<std::string>();
}

double real_query(const httplib::Request& req, const char* name, double fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || !std::isfinite(v)) {
    throw Error(ErrorKind::kInvalidValue, std::string("query parameter '") + name + "' must be a real");
  }
  return v;
}

std::string content_type_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

struct StudyServer::Impl {
  StudyState& state;
  httplib::Server server;

  explicit Impl(StudyState& s) : state(s) { routes(); }

  void routes() {
    server.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      std::optional<std::uint64_t> seed;
      if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
        if (!it->is_number_unsigned()) {
          throw Error(ErrorKind::kSchemaError, "field 'seed' must be a nonnegative integer");
        }
        seed = it->get<std::uint64_t>();
      }
      const auto d = state.create_session(string_field(body, "pair_set_id"),
                                          string_field(body, "subject_id"), seed);
      send_json(res, 201, json{{"session_id", d.session_id}, {"total_pairs", d.total_pairs}});
    }));

    server.Get(R"(/api/sessions/([^/]+)/next)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto next = state.next_pair(req.matches[1]);
                 if (next.done) {
                   send_json(res, 200, json{{"done", true}});
                   return;
                 }
                 send_json(res, 200,
                           json{{"pair_index", next.pair_index},
                                {"left_image_url", "/images/" + next.left_image},
                                {"right_image_url", "/images/" + next.right_image}});
               }));

    server.Post(R"(/api/sessions/([^/]+)/responses)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string session_id = req.matches[1];
                  const auto body = parse_body(req);
                  // Unknown sessions answer 404 before body validation.
                  state.session(session_id);
                  auto index = body.find("pair_index");
                  if (index == body.end() || !index->is_number_integer()) {
                    throw Error(ErrorKind::kInvalidPair, "field 'pair_index' must be an integer");
                  }
                  if (index->get<long long>() < 0) {
                    throw Error(ErrorKind::kInvalidPair, "pair_index must be nonnegative");
                  }
                  auto ms = body.find("response_ms");
                  if (ms == body.end() || !ms->is_number()) {
                    throw Error(ErrorKind::kSchemaError, "field 'response_ms' must be a number");
                  }
                  state.record_response(session_id, index->get<std::size_t>(),
                                        parse_choice(string_field(body, "choice")),
                                        ms->get<double>(), string_field(body, "response_id"));
                  send_json(res, 200, json{{"accepted", true}});
                }));

    server.Get(R"(/api/pairsets/([^/]+)/matrix)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 res.status = 200;
                 res.set_content(ranking::format_matrix_csv(state.export_matrix(req.matches[1])),
                                 "text/csv");
               }));

    server.Get(R"(/api/pairsets/([^/]+)/ranking)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 const double epsilon = real_query(req, "epsilon", ranking::kDefaultEpsilon);
                 const double tol = real_query(req, "tol", ranking::kDefaultTolerance);
                 const auto models = state.export_matrix(id).models;
                 const auto result = state.live_ranking(id, epsilon, tol);
                 const auto ranks = ranking::ranks_from_weights(result.weights);
                 json list = json::array();
                 for (std::size_t i = 0; i < models.size(); ++i) {
                   list.push_back({{"id", models[i]}, {"weight", result.weights[i]}, {"rank", ranks[i]}});
                 }
                 send_json(res, 200, json{{"models", list}});
               }));

    server.Get(R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto path = state.image_path(req.matches[1]);
                 if (!std::filesystem::is_regular_file(path)) {
                   throw Error(ErrorKind::kUnknownImage, "image file missing for " + req.matches[1].str());
                 }
                 res.status = 200;
                 res.set_content(read_text_file(path), content_type_for(path));
               }));
  }
};

StudyServer::StudyServer(StudyState& state) : impl_(std::make_unique<Impl>(state)) {}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const ServerOptions& options) {
  if (options.port == 0) {
    const int port = impl_->server.bind_to_any_port(options.host);
    if (port < 0) throw Error(ErrorKind::kIo, "cannot bind " + options.host);
    return port;
  }
  if (!impl_->server.bind_to_port(options.host, options.port)) {
    throw Error(ErrorKind::kIo, "cannot bind " + options.host + ":" + std::to_string(options.port));
  }
  return options.port;
}

void StudyServer::listen() { impl_->server.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace worthiness::study
