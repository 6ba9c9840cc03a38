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

#include "csv.hpp"

#include <charconv>
#include <string>

#include "worthiness/error.hpp"

namespace worthiness::csv {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

Reader::Reader(std::string_view text,
               const std::vector<std::string>& required) {
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t width = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split(line, ',');
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        columns_.emplace(std::string(fields[i]), i);
      }
      width = fields.size();
      have_header = true;
    } else {
      if (fields.size() != width) {
        throw Error(ErrorKind::kSchemaError,
                    "line " + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " fields, found " +
                        std::to_string(fields.size()));
      }
      rows_.push_back(Row{line_no, std::move(fields)});
    }
    if (end == text.size()) break;
  }
  for (const auto& name : required) {
    if (!columns_.count(name)) {
      throw Error(ErrorKind::kSchemaError, "missing column '" + name + "'");
    }
  }
}

bool Reader::has_column(const std::string& name) const {
  return columns_.count(name) != 0;
}

std::string_view Reader::field(const Row& row, const std::string& name) const {
  return row.fields.at(columns_.at(name));
}

double parse_real(std::string_view text, std::size_t line,
                  std::string_view column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw Error(ErrorKind::kInvalidValue,
                "line " + std::to_string(line) + ": column '" +
                    std::string(column) + "' is not a number: '" +
                    std::string(text) + "'");
  }
  return value;
}

long long parse_integer(std::string_view text, std::size_t line,
                        std::string_view column) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::kInvalidValue,
                "line " + std::to_string(line) + ": column '" +
                    std::string(column) + "' is not an integer: '" +
                    std::string(text) + "'");
  }
  return value;
}

}  // namespace worthiness::csv
