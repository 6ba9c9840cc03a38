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

// Seeded synthetic corpora for benchmarks, demos and tests. Each generator is
// a pure function of its options.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "worthiness/ingest.hpp"
#include "worthiness/select.hpp"

namespace worthiness::synthetic {

struct Corpus {
  CorpusManifest manifest;
  ScoreTable scores;
  MosTable mos;
  FeatureStore features;
  EnsembleTable committee;
  select::DropoutHead dropout_head;
};

// Fixed quality models scoring a shared latent quality with model-specific
// gain and noise. Image ids are img00000...; model ids m1..mM. Manifest paths
// point at images/<id>.bmp.
struct GmadCorpusOptions {
  std::size_t models = 9;
  std::size_t images = 2000;
  std::uint64_t seed = 0;
};
Corpus make_gmad_corpus(const GmadCorpusOptions& options);

// One quality model "f" whose error magnitude is planted in a single feature
// coordinate: |f - mos| = error_scale * d with d ~ Exp(1) stored at
// stages[1][0]. Half the images are labeled (failure-net training), half
// unlabeled (selection pool). Also carries an uncertainty column, a committee
// ensemble and a dropout head over the logits.
struct SelectionCorpusOptions {
  std::size_t images = 2000;
  std::vector<std::size_t> stage_widths{16, 32, 64, 128};
  std::size_t logit_width = 64;
  double error_scale = 0.5;
  std::size_t committee_members = 5;
  std::uint64_t seed = 0;
};
Corpus make_selection_corpus(const SelectionCorpusOptions& options);

// Two image domains with separate feature blocks, both linear in their latent
// factors. Domain B is rare in the labeled pool and its block is stored at a
// small scale, so a ridge head fitted on the labeled pool shrinks the B
// weights and fails mostly on B until it sees more B labels. MOS noise that
// no feature explains caps the attainable SRCC; the optional interaction term
// adds a feature-dependent error no linear head can remove.
struct LoopCorpusOptions {
  std::size_t images = 2000;
  std::size_t holdout = 500;
  std::size_t labeled_a = 135;
  std::size_t labeled_b = 15;
  double domain_b_share = 0.3;
  double domain_b_scale = 0.02;
  double interaction = 0.0;
  double mos_noise = 0.0;
  std::uint64_t seed = 0;
};
Corpus make_loop_corpus(const LoopCorpusOptions& options);

// Uncompressed 24-bit BMP of a flat gray square.
std::string flat_bmp(unsigned char gray, int side = 32);

// Writes manifest.json, scores.csv, mos.csv, features.jsonl, and when present
// committee.csv and dropout_head.json. With `images` set, one BMP per
// manifest path is written under `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir, bool images = false);

}  // namespace worthiness::synthetic
