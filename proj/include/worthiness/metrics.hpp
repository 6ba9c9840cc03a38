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

#include <map>
#include <span>
#include <vector>

#include "worthiness/ingest.hpp"

namespace worthiness {

// Standard normal CDF, evaluated through erfc so both tails keep full
// relative precision.
double std_normal_cdf(double z);

// Standard normal density.
double std_normal_pdf(double z);

// 1 - sqrt(p * q) - sqrt((1 - p) * (1 - q)). Both arguments must lie in [0, 1].
double fidelity_loss(double p, double p_hat);

// Probability that a Gaussian quality N(mu_x, sigma_x^2) exceeds an
// independent N(mu_y, sigma_y^2).
double comparison_probability(double mu_x, double sigma_x, double mu_y,
                              double sigma_y);

// Average (fractional) ranks, 1-based. Ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

// Spearman correlation: Pearson correlation of the fractional ranks.
double srcc(std::span<const double> a, std::span<const double> b);

// Per-image (f(x) - mos(x))^2 over every image scored by `scores`.
std::map<ImageId, double> squared_error_table(
    const std::map<ImageId, double>& scores, const MosTable& mos);

}  // namespace worthiness
