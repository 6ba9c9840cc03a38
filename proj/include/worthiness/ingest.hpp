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

// Corpus model and loaders. Tables are CSV, features are JSONL, the manifest
// is a JSON document. All containers are ordered by image id so that iteration
// order is the global tie-break order.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace worthiness {

using ImageId = std::string;
using ModelId = std::string;

// Throws InvalidValue unless `id` is a nonempty string of at most 128 bytes
// without whitespace or CSV metacharacters.
void check_image_id(std::string_view id);

struct ScoreEntry {
  double score = 0.0;
  std::optional<double> uncertainty;

  bool operator==(const ScoreEntry&) const = default;
};

class ScoreTable {
 public:
  using Key = std::pair<ImageId, ModelId>;

  // Throws DuplicateEntry if the (image, model) pair is already present and
  // InvalidValue for non-finite scores or non-positive uncertainty.
  void insert(const ImageId& image, const ModelId& model, ScoreEntry entry);

  const std::map<Key, ScoreEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::vector<ModelId> models() const;
  std::vector<ImageId> images() const;
  bool has_uncertainty() const;
  std::optional<ScoreEntry> find(const ImageId& image,
                                 const ModelId& model) const;

  // Scores of one model keyed by image id.
  std::map<ImageId, double> model_scores(const ModelId& model) const;
  // Uncertainties of one model; SchemaError if any scored image lacks one.
  std::map<ImageId, double> model_uncertainty(const ModelId& model) const;

  // Resolves the model to use for single-model operations: `requested` if
  // given, otherwise the only model in the table.
  ModelId resolve_model(const std::optional<ModelId>& requested) const;

  bool operator==(const ScoreTable&) const = default;

 private:
  std::map<Key, ScoreEntry> entries_;
};

struct MosTable {
  std::map<ImageId, double> values;

  // UnknownImage if absent.
  double at(const ImageId& id) const;
  bool contains(const ImageId& id) const { return values.count(id) != 0; }
  std::size_t size() const { return values.size(); }

  bool operator==(const MosTable&) const = default;
};

struct FeatureRecord {
  std::vector<std::vector<double>> stages;
  std::vector<double> logit;

  // Stages concatenated in declaration order.
  std::vector<double> concatenated_stages() const;

  bool operator==(const FeatureRecord&) const = default;
};

struct FeatureStore {
  std::vector<std::size_t> stage_widths;
  std::size_t logit_width = 0;
  std::map<ImageId, FeatureRecord> records;

  const FeatureRecord& at(const ImageId& id) const;
  bool contains(const ImageId& id) const { return records.count(id) != 0; }

  // Throws DimensionError naming the id and stage if the record does not
  // match the declared widths, InvalidValue for non-finite entries.
  void check_record(const ImageId& id, const FeatureRecord& record) const;

  bool operator==(const FeatureStore&) const = default;
};

enum class Partition { kLabeled, kUnlabeled, kHoldout };

std::string_view partition_name(Partition partition);
Partition parse_partition(std::string_view text);

struct ManifestImage {
  ImageId id;
  std::optional<std::string> path;
  Partition partition = Partition::kUnlabeled;

  bool operator==(const ManifestImage&) const = default;
};

struct CorpusManifest {
  std::string name;
  std::vector<std::size_t> stage_widths{64, 128, 256, 512};
  std::size_t logit_width = 1000;
  std::vector<ManifestImage> images;

  bool contains(const ImageId& id) const;
  const ManifestImage& image(const ImageId& id) const;
  // Sorted ids of one partition.
  std::vector<ImageId> ids_in(Partition partition) const;
  std::vector<ImageId> all_ids() const;

  bool operator==(const CorpusManifest&) const = default;
};

class EnsembleTable {
 public:
  using Key = std::pair<ImageId, std::string>;

  void insert(const ImageId& image, const std::string& member, double score);

  const std::map<Key, double>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Member scores per image, ordered by member id.
  std::map<ImageId, std::vector<double>> members_by_image() const;

  bool operator==(const EnsembleTable&) const = default;

 private:
  std::map<Key, double> entries_;
};

struct ValidationReport {
  // Section name (for example "features.missing") to offending ids.
  std::map<std::string, std::vector<std::string>> issues;

  bool empty() const { return issues.empty(); }
  std::string to_json() const;
};

// Parsers take the text of a file; loaders read it from disk first.
ScoreTable parse_scores(std::string_view text);
MosTable parse_mos(std::string_view text);
CorpusManifest parse_manifest(std::string_view text);
FeatureStore parse_features(std::string_view text,
                            const CorpusManifest& manifest);
EnsembleTable parse_ensemble(std::string_view text);

ScoreTable load_scores(const std::filesystem::path& path);
MosTable load_mos(const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);
FeatureStore load_features(const std::filesystem::path& path,
                           const CorpusManifest& manifest);
EnsembleTable load_ensemble(const std::filesystem::path& path);

// Canonical text forms. Reparsing the output yields an equal value.
std::string format_scores(const ScoreTable& table);
std::string format_mos(const MosTable& table);
std::string format_manifest(const CorpusManifest& manifest);
std::string format_features(const FeatureStore& store);
std::string format_ensemble(const EnsembleTable& table);

ValidationReport validate_corpus(const CorpusManifest& manifest,
                                 const ScoreTable& scores,
                                 const MosTable* mos = nullptr,
                                 const FeatureStore* features = nullptr,
                                 const EnsembleTable* ensembles = nullptr);

// Shortest decimal text that reads back to the same double.
std::string format_real(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace worthiness
