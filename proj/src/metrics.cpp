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

#include "worthiness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "worthiness/error.hpp"

namespace worthiness {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::kInvalidValue,
                std::string(what) + " is outside [0, 1]: " + std::to_string(p));
  }
}

}  // namespace

double std_normal_cdf(double z) {
  if (!std::isfinite(z)) {
    throw Error(ErrorKind::kInvalidValue, "std_normal_cdf argument is not finite");
  }
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double fidelity_loss(double p, double p_hat) {
  check_probability(p, "p");
  check_probability(p_hat, "p_hat");
  const double loss = 1.0 - std::sqrt(p * p_hat) - std::sqrt((1.0 - p) * (1.0 - p_hat));
  // Rounding can leave a residue of a few ulps below zero when p == p_hat.
  return std::clamp(loss, 0.0, 1.0);
}

double comparison_probability(double mu_x, double sigma_x, double mu_y, double sigma_y) {
  if (!(sigma_x >= 0.0) || !(sigma_y >= 0.0)) {
    throw Error(ErrorKind::kInvalidValue, "standard deviations must be nonnegative");
  }
  const double spread = std::sqrt(sigma_x * sigma_x + sigma_y * sigma_y);
  if (spread == 0.0) {
    throw Error(ErrorKind::kDegenerateVariance, "both standard deviations are zero");
  }
  return std_normal_cdf((mu_x - mu_y) / spread);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean((i+1)..j)
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kShapeError, "srcc inputs differ in length: " +
                                            std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()));
  }
  if (a.size() < 2) {
    throw Error(ErrorKind::kShapeError, "srcc needs at least two observations");
  }
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorKind::kUndefinedCorrelation, "srcc of a constant list is undefined");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::map<ImageId, double> squared_error_table(const std::map<ImageId, double>& scores,
                                              const MosTable& mos) {
  std::map<ImageId, double> out;
  for (const auto& [id, score] : scores) {
    const double diff = score - mos.at(id);
    out.emplace(id, diff * diff);
  }
  return out;
}

}  // namespace worthiness
