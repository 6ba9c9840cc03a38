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

// Shared test helpers: scratch directories, tiny corpora and an error-kind
// assertion.

#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "worthiness/error.hpp"
#include "worthiness/ingest.hpp"

namespace worthiness::testing {

// Fails unless `stmt` throws worthiness::Error of the given kind.
#define EXPECT_ERROR_KIND(stmt, expected_kind)                                   \
  do {                                                                           \
    bool caught_ = false;                                                        \
    try {                                                                        \
      stmt;                                                                      \
    } catch (const ::worthiness::Error& e_) {                                    \
      caught_ = true;                                                            \
      EXPECT_EQ(e_.kind(), expected_kind) << e_.name() << ": " << e_.what();     \
    }                                                                            \
    EXPECT_TRUE(caught_) << "expected " << ::worthiness::error_name(expected_kind); \
  } while (0)

// Fresh empty directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("worthiness-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string numbered_id(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return prefix + digits;
}

// Random feature store with the given widths and n images "x000"...
inline FeatureStore random_features(std::size_t n, const std::vector<std::size_t>& widths,
                                    std::size_t logit_width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureStore store;
  store.stage_widths = widths;
  store.logit_width = logit_width;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRecord r;
    for (auto w : widths) {
      std::vector<double> v(w);
      for (auto& x : v) x = normal(rng);
      r.stages.push_back(std::move(v));
    }
    r.logit.resize(logit_width);
    for (auto& x : r.logit) x = normal(rng);
    store.records.emplace(numbered_id("x", i), std::move(r));
  }
  return store;
}

inline std::vector<ImageId> ids_of(const FeatureStore& store) {
  std::vector<ImageId> ids;
  for (const auto& [id, _] : store.records) ids.push_back(id);
  return ids;
}

}  // namespace worthiness::testing
