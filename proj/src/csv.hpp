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

// Minimal unquoted CSV reader shared by the table loaders. Fields never
// contain commas or quotes (ids are validated), so no quoting is supported.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace worthiness::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source text
  std::vector<std::string_view> fields;
};

class Reader {
 public:
  // Parses the header and data rows. Blank lines are skipped. Throws
  // SchemaError if a required column is absent or a row has the wrong
  // number of fields.
  Reader(std::string_view text, const std::vector<std::string>& required);

  const std::vector<Row>& rows() const { return rows_; }
  bool has_column(const std::string& name) const;
  std::string_view field(const Row& row, const std::string& name) const;

 private:
  std::map<std::string, std::size_t> columns_;
  std::vector<Row> rows_;
};

// Strict parse of a finite or non-finite real; InvalidValue names the line.
double parse_real(std::string_view text, std::size_t line,
                  std::string_view column);
long long parse_integer(std::string_view text, std::size_t line,
                        std::string_view column);

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace worthiness::csv
