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

#include "worthiness/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "json.hpp"
#include "worthiness/error.hpp"

namespace worthiness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

std::string line_prefix(std::size_t line) {
  return "line " + std::to_string(line) + ": ";
}

void require_finite(double value, std::size_t line, std::string_view column) {
  if (!std::isfinite(value)) {
    fail(ErrorKind::kInvalidValue, line_prefix(line) + "column '" +
                                       std::string(column) +
                                       "' is not finite");
  }
}

void check_id_at(std::string_view id, std::size_t line) {
  try {
    check_image_id(id);
  } catch (const Error& e) {
    fail(ErrorKind::kInvalidValue, line_prefix(line) + e.what());
  }
}

std::vector<double> json_reals(const json& node, const std::string& what) {
  if (!node.is_array()) fail(ErrorKind::kSchemaError, what + " is not an array");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) fail(ErrorKind::kInvalidValue, what + " holds a non-number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ErrorKind::kInvalidValue, what + " is not finite");
    out.push_back(x);
  }
  return out;
}

void append_reals(std::string& out, const std::vector<double>& values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_real(values[i]);
  }
  out += ']';
}

}  // namespace

void check_image_id(std::string_view id) {
  if (id.empty()) fail(ErrorKind::kInvalidValue, "image id is empty");
  if (id.size() > 128) {
    fail(ErrorKind::kInvalidValue,
         "image id longer than 128 bytes: '" + std::string(id.substr(0, 32)) + "...'");
  }
  for (const char c : id) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
        c == '\f' || c == ',' || c == '"') {
      fail(ErrorKind::kInvalidValue,
           "image id contains whitespace or separator: '" + std::string(id) + "'");
    }
  }
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// ScoreTable

void ScoreTable::insert(const ImageId& image, const ModelId& model,
                        ScoreEntry entry) {
  if (!std::isfinite(entry.score)) {
    fail(ErrorKind::kInvalidValue, "non-finite score for " + image);
  }
  if (entry.uncertainty &&
      (!std::isfinite(*entry.uncertainty) || *entry.uncertainty <= 0.0)) {
    fail(ErrorKind::kInvalidValue, "uncertainty must be positive for " + image);
  }
  auto [it, inserted] = entries_.emplace(Key{image, model}, entry);
  if (!inserted) {
    fail(ErrorKind::kDuplicateEntry,
         "duplicate score for (" + image + ", " + model + ")");
  }
}

std::vector<ModelId> ScoreTable::models() const {
  std::set<ModelId> ids;
  for (const auto& [key, _] : entries_) ids.insert(key.second);
  return {ids.begin(), ids.end()};
}

std::vector<ImageId> ScoreTable::images() const {
  std::set<ImageId> ids;
  for (const auto& [key, _] : entries_) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

bool ScoreTable::has_uncertainty() const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [](const auto& kv) { return kv.second.uncertainty.has_value(); });
}

std::optional<ScoreEntry> ScoreTable::find(const ImageId& image,
                                           const ModelId& model) const {
  auto it = entries_.find(Key{image, model});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::map<ImageId, double> ScoreTable::model_scores(const ModelId& model) const {
  std::map<ImageId, double> out;
  for (const auto& [key, entry] : entries_) {
    if (key.second == model) out.emplace(key.first, entry.score);
  }
  return out;
}

std::map<ImageId, double> ScoreTable::model_uncertainty(const ModelId& model) const {
  std::map<ImageId, double> out;
  for (const auto& [key, entry] : entries_) {
    if (key.second != model) continue;
    if (!entry.uncertainty) {
      fail(ErrorKind::kSchemaError,
           "no uncertainty for image " + key.first + " under model " + model);
    }
    out.emplace(key.first, *entry.uncertainty);
  }
  return out;
}

ModelId ScoreTable::resolve_model(const std::optional<ModelId>& requested) const {
  const auto ids = models();
  if (requested) {
    if (!std::binary_search(ids.begin(), ids.end(), *requested)) {
      fail(ErrorKind::kSchemaError, "model '" + *requested + "' not in score table");
    }
    return *requested;
  }
  if (ids.size() != 1) {
    fail(ErrorKind::kSchemaError,
         "score table holds " + std::to_string(ids.size()) +
             " models; choose one explicitly");
  }
  return ids.front();
}

ScoreTable parse_scores(std::string_view text) {
  csv::Reader reader(text, {"image_id", "model_id", "score"});
  const bool with_uncertainty = reader.has_column("uncertainty");
  ScoreTable table;
  std::map<ScoreTable::Key, std::size_t> first_line;
  for (const auto& row : reader.rows()) {
    const std::string image(reader.field(row, "image_id"));
    const std::string model(reader.field(row, "model_id"));
    check_id_at(image, row.line);
    if (model.empty()) fail(ErrorKind::kInvalidValue, line_prefix(row.line) + "empty model id");
    ScoreEntry entry;
    entry.score = csv::parse_real(reader.field(row, "score"), row.line, "score");
    require_finite(entry.score, row.line, "score");
    if (with_uncertainty) {
      const auto field = reader.field(row, "uncertainty");
      if (!field.empty()) {
        const double u = csv::parse_real(field, row.line, "uncertainty");
        if (!std::isfinite(u) || u <= 0.0) {
          fail(ErrorKind::kInvalidValue,
               line_prefix(row.line) + "uncertainty must be positive and finite");
        }
        entry.uncertainty = u;
      }
    }
    auto [it, inserted] = first_line.emplace(ScoreTable::Key{image, model}, row.line);
    if (!inserted) {
      fail(ErrorKind::kDuplicateEntry,
           "(" + image + ", " + model + ") appears on lines " +
               std::to_string(it->second) + " and " + std::to_string(row.line));
    }
    table.insert(image, model, entry);
  }
  return table;
}

std::string format_scores(const ScoreTable& table) {
  const bool with_uncertainty = table.has_uncertainty();
  std::string out = with_uncertainty ? "image_id,model_id,score,uncertainty\n"
                                     : "image_id,model_id,score\n";
  for (const auto& [key, entry] : table.entries()) {
    out += key.first;
    out += ',';
    out += key.second;
    out += ',';
    out += format_real(entry.score);
    if (with_uncertainty) {
      out += ',';
      if (entry.uncertainty) out += format_real(*entry.uncertainty);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// MosTable

double MosTable::at(const ImageId& id) const {
  auto it = values.find(id);
  if (it == values.end()) fail(ErrorKind::kUnknownImage, "no MOS for image " + id);
  return it->second;
}

MosTable parse_mos(std::string_view text) {
  csv::Reader reader(text, {"image_id", "mos"});
  MosTable table;
  std::map<ImageId, std::size_t> first_line;
  for (const auto& row : reader.rows()) {
    const std::string image(reader.field(row, "image_id"));
    check_id_at(image, row.line);
    const double mos = csv::parse_real(reader.field(row, "mos"), row.line, "mos");
    require_finite(mos, row.line, "mos");
    auto [it, inserted] = first_line.emplace(image, row.line);
    if (!inserted) {
      fail(ErrorKind::kDuplicateEntry,
           "image " + image + " appears on lines " + std::to_string(it->second) +
               " and " + std::to_string(row.line));
    }
    table.values.emplace(image, mos);
  }
  return table;
}

std::string format_mos(const MosTable& table) {
  std::string out = "image_id,mos\n";
  for (const auto& [id, mos] : table.values) {
    out += id;
    out += ',';
    out += format_real(mos);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view partition_name(Partition partition) {
  switch (partition) {
    case Partition::kLabeled: return "labeled";
    case Partition::kUnlabeled: return "unlabeled";
    case Partition::kHoldout: return "holdout";
  }
  return "unlabeled";
}

Partition parse_partition(std::string_view text) {
  if (text == "labeled") return Partition::kLabeled;
  if (text == "unlabeled") return Partition::kUnlabeled;
  if (text == "holdout") return Partition::kHoldout;
  fail(ErrorKind::kSchemaError, "unknown partition '" + std::string(text) + "'");
}

bool CorpusManifest::contains(const ImageId& id) const {
  return std::any_of(images.begin(), images.end(),
                     [&](const ManifestImage& m) { return m.id == id; });
}

const ManifestImage& CorpusManifest::image(const ImageId& id) const {
  for (const auto& m : images) {
    if (m.id == id) return m;
  }
  fail(ErrorKind::kUnknownImage, "image " + id + " not in manifest");
}

std::vector<ImageId> CorpusManifest::ids_in(Partition partition) const {
  std::vector<ImageId> out;
  for (const auto& m : images) {
    if (m.partition == partition) out.push_back(m.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ImageId> CorpusManifest::all_ids() const {
  std::vector<ImageId> out;
  out.reserve(images.size());
  for (const auto& m : images) out.push_back(m.id);
  std::sort(out.begin(), out.end());
  return out;
}

CorpusManifest parse_manifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kSchemaError, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::kSchemaError, "manifest must be a JSON object");
  CorpusManifest manifest;
  try {
    manifest.name = doc.value("name", std::string());
    if (doc.contains("stage_widths")) {
      manifest.stage_widths = doc.at("stage_widths").get<std::vector<std::size_t>>();
    }
    if (doc.contains("logit_width")) {
      manifest.logit_width = doc.at("logit_width").get<std::size_t>();
    }
    if (!doc.contains("images") || !doc.at("images").is_array()) {
      fail(ErrorKind::kSchemaError, "manifest lacks an 'images' array");
    }
    std::set<ImageId> seen;
    for (const auto& node : doc.at("images")) {
      ManifestImage image;
      image.id = node.at("id").get<std::string>();
      check_image_id(image.id);
      if (node.contains("path") && !node.at("path").is_null()) {
        image.path = node.at("path").get<std::string>();
      }
      image.partition = parse_partition(node.value("partition", std::string("unlabeled")));
      if (!seen.insert(image.id).second) {
        fail(ErrorKind::kDuplicateEntry, "image " + image.id + " listed twice in manifest");
      }
      manifest.images.push_back(std::move(image));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kSchemaError, std::string("malformed manifest: ") + e.what());
  }
  if (manifest.stage_widths.empty()) {
    fail(ErrorKind::kSchemaError, "manifest declares no stages");
  }
  for (const auto w : manifest.stage_widths) {
    if (w == 0) fail(ErrorKind::kSchemaError, "stage width must be positive");
  }
  if (manifest.logit_width == 0) fail(ErrorKind::kSchemaError, "logit width must be positive");
  std::sort(manifest.images.begin(), manifest.images.end(),
            [](const ManifestImage& a, const ManifestImage& b) { return a.id < b.id; });
  return manifest;
}

std::string format_manifest(const CorpusManifest& manifest) {
  json doc;
  doc["name"] = manifest.name;
  doc["stage_widths"] = manifest.stage_widths;
  doc["logit_width"] = manifest.logit_width;
  json images = json::array();
  for (const auto& m : manifest.images) {
    json node;
    node["id"] = m.id;
    if (m.path) node["path"] = *m.path;
    node["partition"] = std::string(partition_name(m.partition));
    images.push_back(std::move(node));
  }
  doc["images"] = std::move(images);
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Features

std::vector<double> FeatureRecord::concatenated_stages() const {
  std::vector<double> out;
  for (const auto& s : stages) out.insert(out.end(), s.begin(), s.end());
  return out;
}

const FeatureRecord& FeatureStore::at(const ImageId& id) const {
  auto it = records.find(id);
  if (it == records.end()) fail(ErrorKind::kUnknownImage, "no features for image " + id);
  return it->second;
}

void FeatureStore::check_record(const ImageId& id, const FeatureRecord& record) const {
  if (record.stages.size() != stage_widths.size()) {
    fail(ErrorKind::kDimensionError,
         "image " + id + ": expected " + std::to_string(stage_widths.size()) +
             " stages, found " + std::to_string(record.stages.size()));
  }
  for (std::size_t s = 0; s < stage_widths.size(); ++s) {
    if (record.stages[s].size() != stage_widths[s]) {
      fail(ErrorKind::kDimensionError,
           "image " + id + ": stage " + std::to_string(s) + " has width " +
               std::to_string(record.stages[s].size()) + ", expected " +
               std::to_string(stage_widths[s]));
    }
  }
  if (record.logit.size() != logit_width) {
    fail(ErrorKind::kDimensionError,
         "image " + id + ": logit width " + std::to_string(record.logit.size()) +
             ", expected " + std::to_string(logit_width));
  }
}

FeatureStore parse_features(std::string_view text, const CorpusManifest& manifest) {
  FeatureStore store;
  store.stage_widths = manifest.stage_widths;
  store.logit_width = manifest.logit_width;
  std::set<ImageId> known;
  for (const auto& m : manifest.images) known.insert(m.id);

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kSchemaError, line_prefix(line_no) + "invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("image_id") || !doc.contains("stages") ||
        !doc.contains("logit")) {
      fail(ErrorKind::kSchemaError,
           line_prefix(line_no) + "record needs image_id, stages and logit");
    }
    if (!doc.at("image_id").is_string()) {
      fail(ErrorKind::kSchemaError, line_prefix(line_no) + "image_id must be a string");
    }
    const auto id = doc.at("image_id").get<std::string>();
    if (!known.count(id)) {
      fail(ErrorKind::kUnknownImage, line_prefix(line_no) + "image " + id + " not in manifest");
    }
    FeatureRecord record;
    const auto& stages = doc.at("stages");
    if (!stages.is_array()) fail(ErrorKind::kSchemaError, line_prefix(line_no) + "stages must be an array");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      record.stages.push_back(
          json_reals(stages[s], line_prefix(line_no) + "stage " + std::to_string(s)));
    }
    record.logit = json_reals(doc.at("logit"), line_prefix(line_no) + "logit");
    store.check_record(id, record);
    if (!store.records.emplace(id, std::move(record)).second) {
      fail(ErrorKind::kDuplicateEntry, line_prefix(line_no) + "second record for image " + id);
    }
  }
  return store;
}

std::string format_features(const FeatureStore& store) {
  std::string out;
  for (const auto& [id, record] : store.records) {
    out += "{\"image_id\":";
    out += json(id).dump();
    out += ",\"stages\":[";
    for (std::size_t s = 0; s < record.stages.size(); ++s) {
      if (s) out += ',';
      append_reals(out, record.stages[s]);
    }
    out += "],\"logit\":";
    append_reals(out, record.logit);
    out += "}\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensembles

void EnsembleTable::insert(const ImageId& image, const std::string& member, double score) {
  if (!std::isfinite(score)) fail(ErrorKind::kInvalidValue, "non-finite ensemble score for " + image);
  if (!entries_.emplace(Key{image, member}, score).second) {
    fail(ErrorKind::kDuplicateEntry, "duplicate ensemble entry (" + image + ", " + member + ")");
  }
}

std::map<ImageId, std::vector<double>> EnsembleTable::members_by_image() const {
  std::map<ImageId, std::vector<double>> out;
  for (const auto& [key, score] : entries_) out[key.first].push_back(score);
  return out;
}

EnsembleTable parse_ensemble(std::string_view text) {
  csv::Reader reader(text, {"image_id", "member_id", "score"});
  EnsembleTable table;
  std::map<EnsembleTable::Key, std::size_t> first_line;
  for (const auto& row : reader.rows()) {
    const std::string image(reader.field(row, "image_id"));
    const std::string member(reader.field(row, "member_id"));
    check_id_at(image, row.line);
    const double score = csv::parse_real(reader.field(row, "score"), row.line, "score");
    require_finite(score, row.line, "score");
    auto [it, inserted] = first_line.emplace(EnsembleTable::Key{image, member}, row.line);
    if (!inserted) {
      fail(ErrorKind::kDuplicateEntry,
           "(" + image + ", " + member + ") appears on lines " +
               std::to_string(it->second) + " and " + std::to_string(row.line));
    }
    table.insert(image, member, score);
  }
  return table;
}

std::string format_ensemble(const EnsembleTable& table) {
  std::string out = "image_id,member_id,score\n";
  for (const auto& [key, score] : table.entries()) {
    out += key.first;
    out += ',';
    out += key.second;
    out += ',';
    out += format_real(score);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loaders

ScoreTable load_scores(const std::filesystem::path& path) {
  return parse_scores(read_text_file(path));
}
MosTable load_mos(const std::filesystem::path& path) {
  return parse_mos(read_text_file(path));
}
CorpusManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path));
}
FeatureStore load_features(const std::filesystem::path& path, const CorpusManifest& manifest) {
  return parse_features(read_text_file(path), manifest);
}
EnsembleTable load_ensemble(const std::filesystem::path& path) {
  return parse_ensemble(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Validation

namespace {

template <typename Container>
void diff_ids(const std::set<ImageId>& manifest_ids, const Container& present,
              const std::string& section, ValidationReport& report) {
  std::vector<std::string> missing;
  std::vector<std::string> unknown;
  for (const auto& id : manifest_ids) {
    if (!present.count(id)) missing.push_back(id);
  }
  for (const auto& id : present) {
    if (!manifest_ids.count(id)) unknown.push_back(id);
  }
  if (!missing.empty()) report.issues[section + ".missing"] = std::move(missing);
  if (!unknown.empty()) report.issues[section + ".unknown"] = std::move(unknown);
}

}  // namespace

ValidationReport validate_corpus(const CorpusManifest& manifest, const ScoreTable& scores,
                                 const MosTable* mos, const FeatureStore* features,
                                 const EnsembleTable* ensembles) {
  ValidationReport report;
  std::set<ImageId> manifest_ids;
  for (const auto& m : manifest.images) manifest_ids.insert(m.id);

  // Scores: every model must cover every manifest image.
  {
    std::vector<std::string> missing;
    std::set<ImageId> scored;
    for (const auto& model : scores.models()) {
      const auto per_model = scores.model_scores(model);
      for (const auto& id : manifest_ids) {
        if (!per_model.count(id)) missing.push_back(id + "@" + model);
      }
      for (const auto& [id, _] : per_model) scored.insert(id);
    }
    std::vector<std::string> unknown;
    for (const auto& id : scored) {
      if (!manifest_ids.count(id)) unknown.push_back(id);
    }
    if (scores.empty() && !manifest_ids.empty()) {
      missing.assign(manifest_ids.begin(), manifest_ids.end());
    }
    if (!missing.empty()) report.issues["scores.missing"] = std::move(missing);
    if (!unknown.empty()) report.issues["scores.unknown"] = std::move(unknown);
  }

  if (mos) {
    std::set<ImageId> present;
    for (const auto& [id, _] : mos->values) present.insert(id);
    diff_ids(manifest_ids, present, "mos", report);
  }

  if (features) {
    std::set<ImageId> present;
    for (const auto& [id, _] : features->records) present.insert(id);
    diff_ids(manifest_ids, present, "features", report);
    if (features->stage_widths != manifest.stage_widths ||
        features->logit_width != manifest.logit_width) {
      report.issues["features.widths"] = {"store widths differ from manifest"};
    }
  }

  if (ensembles) {
    const auto by_image = ensembles->members_by_image();
    std::set<ImageId> present;
    std::map<std::size_t, std::size_t> count_histogram;
    for (const auto& [id, members] : by_image) {
      present.insert(id);
      ++count_histogram[members.size()];
    }
    diff_ids(manifest_ids, present, "ensembles", report);
    std::size_t modal = 0;
    std::size_t modal_freq = 0;
    for (const auto& [count, freq] : count_histogram) {
      if (freq > modal_freq) {
        modal = count;
        modal_freq = freq;
      }
    }
    std::vector<std::string> ragged;
    for (const auto& [id, members] : by_image) {
      if (members.size() != modal || members.size() < 2) {
        ragged.push_back(id + ":" + std::to_string(members.size()));
      }
    }
    if (!ragged.empty()) report.issues["ensembles.ragged"] = std::move(ragged);
  }
  return report;
}

std::string ValidationReport::to_json() const {
  json doc = json::object();
  for (const auto& [section, ids] : issues) doc[section] = ids;
  return doc.dump(2) + "\n";
}

}  // namespace worthiness
