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

#include "worthiness/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "worthiness/error.hpp"

namespace worthiness::synthetic {

namespace {

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%05zu", i);
  return buf;
}

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

Corpus make_gmad_corpus(const GmadCorpusOptions& options) {
  if (options.models < 2 || options.images < 2) {
    throw Error(ErrorKind::kInvalidValue, "need at least two models and two images");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Corpus corpus;
  corpus.manifest.name = "gmad-synthetic";
  corpus.features.stage_widths = corpus.manifest.stage_widths;
  corpus.features.logit_width = corpus.manifest.logit_width;
  std::vector<double> latent(options.images);
  for (std::size_t i = 0; i < options.images; ++i) {
    latent[i] = normal(rng);
    const auto id = image_name(i);
    corpus.manifest.images.push_back(ManifestImage{id, "images/" + id + ".bmp", Partition::kUnlabeled});
    corpus.mos.values.emplace(id, latent[i]);
  }
  for (std::size_t m = 0; m < options.models; ++m) {
    const auto model = "m" + std::to_string(m + 1);
    const double gain = 0.6 + 0.1 * static_cast<double>(m);
    const double noise = 0.1 + 0.05 * static_cast<double>(m);
    for (std::size_t i = 0; i < options.images; ++i) {
      corpus.scores.insert(image_name(i), model, ScoreEntry{gain * latent[i] + noise * normal(rng), std::nullopt});
    }
  }
  return corpus;
}

Corpus make_selection_corpus(const SelectionCorpusOptions& options) {
  if (options.images < 4 || options.stage_widths.size() < 2 || options.stage_widths[1] == 0 ||
      options.logit_width == 0 || options.committee_members < 2) {
    throw Error(ErrorKind::kInvalidValue, "selection corpus options out of range");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> exponential(1.0);
  std::bernoulli_distribution coin(0.5);

  Corpus corpus;
  corpus.manifest.name = "selection-synthetic";
  corpus.manifest.stage_widths = options.stage_widths;
  corpus.manifest.logit_width = options.logit_width;
  corpus.features.stage_widths = options.stage_widths;
  corpus.features.logit_width = options.logit_width;

  for (std::size_t i = 0; i < options.images; ++i) {
    const auto id = image_name(i);
    const double mos = normal(rng);
    const double difficulty = exponential(rng);
    const double sign = coin(rng) ? 1.0 : -1.0;
    const double score = mos + sign * options.error_scale * difficulty;

    FeatureRecord record;
    for (const auto width : options.stage_widths) record.stages.push_back(gaussian_vector(rng, width));
    record.stages[1][0] = difficulty;
    record.logit = gaussian_vector(rng, options.logit_width);

    const double uncertainty = std::exp(0.3 * difficulty + 0.5 * normal(rng));
    for (std::size_t m = 0; m < options.committee_members; ++m) {
      char member[16];
      std::snprintf(member, sizeof member, "c%02zu", m);
      corpus.committee.insert(id, member, score + 0.2 * (1.0 + 0.2 * difficulty) * normal(rng));
    }

    const auto partition = i % 2 == 0 ? Partition::kLabeled : Partition::kUnlabeled;
    corpus.manifest.images.push_back(ManifestImage{id, std::nullopt, partition});
    corpus.mos.values.emplace(id, mos);
    corpus.scores.insert(id, "f", ScoreEntry{score, uncertainty});
    corpus.features.records.emplace(id, std::move(record));
  }
  corpus.dropout_head.weights =
      gaussian_vector(rng, options.logit_width, 1.0 / std::sqrt(static_cast<double>(options.logit_width)));
  return corpus;
}

Corpus make_loop_corpus(const LoopCorpusOptions& options) {
  if (options.holdout < 2 || options.labeled_a + options.labeled_b < 2 ||
      options.holdout + options.labeled_a + options.labeled_b >= options.images ||
      !(options.domain_b_share > 0.0 && options.domain_b_share < 1.0)) {
    throw Error(ErrorKind::kInvalidValue, "loop corpus options out of range");
  }
  constexpr std::size_t kBlock = 8;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution domain_b(options.domain_b_share);

  Corpus corpus;
  corpus.manifest.name = "loop-synthetic";
  corpus.manifest.stage_widths = {kBlock, kBlock, kBlock, kBlock};
  corpus.manifest.logit_width = 16;
  corpus.features.stage_widths = corpus.manifest.stage_widths;
  corpus.features.logit_width = corpus.manifest.logit_width;

  const auto w_a = gaussian_vector(rng, kBlock, 1.0 / std::sqrt(double(kBlock)));
  const auto w_b = gaussian_vector(rng, kBlock, 1.0 / std::sqrt(double(kBlock)));
  const double offset_b = 0.5;

  std::size_t taken_a = 0;
  std::size_t taken_b = 0;
  for (std::size_t i = 0; i < options.images; ++i) {
    const auto id = image_name(i);
    const bool is_b = domain_b(rng);
    const auto x = gaussian_vector(rng, kBlock);
    FeatureRecord record;
    record.stages.assign(4, std::vector<double>(kBlock, 0.0));
    if (is_b) {
      for (std::size_t k = 0; k < kBlock; ++k) record.stages[1][k] = options.domain_b_scale * x[k];
    } else {
      record.stages[0] = x;
    }
    record.stages[2] = gaussian_vector(rng, kBlock);
    record.stages[2][0] = is_b ? 1.0 : 0.0;
    record.stages[3] = gaussian_vector(rng, kBlock);
    record.logit = gaussian_vector(rng, corpus.manifest.logit_width);

    const double signal =
        is_b ? offset_b + dot(w_b, x) + options.interaction * x[0] * x[1] : dot(w_a, x);
    const double mos = signal + options.mos_noise * normal(rng);

    Partition partition = Partition::kUnlabeled;
    if (i < options.holdout) {
      partition = Partition::kHoldout;
    } else if (!is_b && taken_a < options.labeled_a) {
      partition = Partition::kLabeled;
      ++taken_a;
    } else if (is_b && taken_b < options.labeled_b) {
      partition = Partition::kLabeled;
      ++taken_b;
    }
    corpus.manifest.images.push_back(ManifestImage{id, std::nullopt, partition});
    corpus.mos.values.emplace(id, mos);
    corpus.features.records.emplace(id, std::move(record));
  }
  return corpus;
}

std::string flat_bmp(unsigned char gray, int side) {
  if (side <= 0) throw Error(ErrorKind::kInvalidValue, "image side must be positive");
  const std::uint32_t row = (static_cast<std::uint32_t>(side) * 3 + 3) & ~3u;
  const std::uint32_t pixels = row * static_cast<std::uint32_t>(side);
  const std::uint32_t file_size = 54 + pixels;
  std::string out(file_size, '\0');
  auto put16 = [&](std::size_t at, std::uint16_t v) {
    out[at] = static_cast<char>(v & 0xff);
    out[at + 1] = static_cast<char>(v >> 8);
  };
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out[at + b] = static_cast<char>((v >> (8 * b)) & 0xff);
  };
  out[0] = 'B';
  out[1] = 'M';
  put32(2, file_size);
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(side));
  put32(22, static_cast<std::uint32_t>(side));
  put16(26, 1);
  put16(28, 24);
  put32(34, pixels);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side * 3; ++x) out[54 + y * row + x] = static_cast<char>(gray);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir, bool images) {
  write_text_file(dir / "manifest.json", format_manifest(corpus.manifest));
  if (!corpus.scores.empty()) write_text_file(dir / "scores.csv", format_scores(corpus.scores));
  if (corpus.mos.size() != 0) write_text_file(dir / "mos.csv", format_mos(corpus.mos));
  if (!corpus.features.records.empty()) {
    write_text_file(dir / "features.jsonl", format_features(corpus.features));
  }
  if (corpus.committee.size() != 0) {
    write_text_file(dir / "committee.csv", format_ensemble(corpus.committee));
  }
  if (!corpus.dropout_head.weights.empty()) {
    write_text_file(dir / "dropout_head.json", select::format_dropout_head(corpus.dropout_head));
  }
  if (!images) return;
  // Gray level follows the MOS rank so the demo images differ visibly.
  std::vector<double> sorted;
  for (const auto& [_, v] : corpus.mos.values) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  for (const auto& m : corpus.manifest.images) {
    if (!m.path) continue;
    unsigned char gray = 128;
    if (!sorted.empty() && corpus.mos.contains(m.id)) {
      const auto rank = std::lower_bound(sorted.begin(), sorted.end(), corpus.mos.at(m.id)) - sorted.begin();
      gray = static_cast<unsigned char>(32 + (191 * rank) / std::max<std::ptrdiff_t>(1, sorted.size() - 1));
    }
    write_text_file(dir / *m.path, flat_bmp(gray));
  }
}

}  // namespace worthiness::synthetic
