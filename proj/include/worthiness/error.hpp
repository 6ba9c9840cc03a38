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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace worthiness {

enum class ErrorKind {
  kIo,
  kSchemaError,
  kDuplicateEntry,
  kInvalidValue,
  kDimensionError,
  kUnknownImage,
  kShapeError,
  kUndefinedCorrelation,
  kDegenerateVariance,
  kInsufficientLevelSet,
  kNoConvergence,
  kEmptyTrainingSet,
  kEmptySelectionPool,
  kBudgetExceedsPool,
  kRaggedEnsemble,
  kUnknownPairSet,
  kUnknownSession,
  kDuplicateResponse,
  kInvalidPair,
};

std::string_view error_name(ErrorKind kind);

// Every domain failure surfaces as this exception type. The kind maps to the
// error names used in diagnostics and HTTP bodies.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace worthiness
