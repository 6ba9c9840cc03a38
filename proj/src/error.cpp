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

#include "worthiness/error.hpp"

namespace worthiness {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kSchemaError: return "SchemaError";
    case ErrorKind::kDuplicateEntry: return "DuplicateEntry";
    case ErrorKind::kInvalidValue: return "InvalidValue";
    case ErrorKind::kDimensionError: return "DimensionError";
    case ErrorKind::kUnknownImage: return "UnknownImage";
    case ErrorKind::kShapeError: return "ShapeError";
    case ErrorKind::kUndefinedCorrelation: return "UndefinedCorrelation";
    case ErrorKind::kDegenerateVariance: return "DegenerateVariance";
    case ErrorKind::kInsufficientLevelSet: return "InsufficientLevelSet";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::kEmptySelectionPool: return "EmptySelectionPool";
    case ErrorKind::kBudgetExceedsPool: return "BudgetExceedsPool";
    case ErrorKind::kRaggedEnsemble: return "RaggedEnsemble";
    case ErrorKind::kUnknownPairSet: return "UnknownPairSet";
    case ErrorKind::kUnknownSession: return "UnknownSession";
    case ErrorKind::kDuplicateResponse: return "DuplicateResponse";
    case ErrorKind::kInvalidPair: return "InvalidPair";
  }
  return "Error";
}

}  // namespace worthiness
