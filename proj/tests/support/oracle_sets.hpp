/*
 * Copyright 2026 The LCRReg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef LCRREG_TESTS_SUPPORT_ORACLE_SETS_HPP_
#define LCRREG_TESTS_SUPPORT_ORACLE_SETS_HPP_

// Small activation sets with known answers, shared by the unit tests and
// the acceptance binary.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lcrreg/lcr.hpp"

namespace lcrreg::oracle {

inline ActivationSet make_set(const std::vector<std::vector<double>>& rows, std::vector<double> labels,
                              std::string layer = "block4") {
  const std::size_t d = rows.front().size();
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return {std::move(layer), Tensor(Shape{rows.size(), d}, std::move(flat)), std::move(labels)};
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

inline std::vector<double> gaussian(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return v;
}

// Positives at x1 > 1, negatives at x1 < -1, closed under both reflections so
// the max-margin normal is exactly (1, 0).
inline ActivationSet symmetric_separable(std::size_t groups, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> gap(1.0, 3.0), spread(0.0, 3.0);
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  for (std::size_t i = 0; i < groups; ++i) {
    const double a = gap(rng), t = spread(rng);
    for (double sx : {1.0, -1.0}) {
      for (double sy : {1.0, -1.0}) {
        rows.push_back({sx * a, sy * t});
        labels.push_back(sx > 0 ? 1 : 0);
      }
    }
  }
  return make_set(rows, labels);
}

// Positives in the same-sign quadrants; every draw is added with its three
// reflections, each jittered, so the quadrants are nearly balanced.
inline ActivationSet xor_set(std::size_t groups, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 2.0), jitter(-0.1, 0.1);
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  for (std::size_t i = 0; i < groups; ++i) {
    const double a = u(rng), b = u(rng);
    for (double sx : {1.0, -1.0}) {
      for (double sy : {1.0, -1.0}) {
        rows.push_back({sx * a + jitter(rng), sy * b + jitter(rng)});
        labels.push_back(rows.back()[0] * rows.back()[1] > 0 ? 1 : 0);
      }
    }
  }
  return make_set(rows, labels);
}

// Every point of a 41x41 grid over [-2,2]^2, away from the axes.
inline ActivationSet xor_grid() {
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  for (int i = 0; i <= 40; ++i) {
    for (int j = 0; j <= 40; ++j) {
      const double a = -2.0 + 0.1 * i, b = -2.0 + 0.1 * j;
      if (std::abs(a) < 0.2 || std::abs(b) < 0.2) continue;
      rows.push_back({a, b});
      labels.push_back(a * b > 0 ? 1 : 0);
    }
  }
  return make_set(rows, labels);
}

// Scores are u . x plus N(0, noise^2) for a random unit u, returned in `u`.
inline ActivationSet planted_scores(std::size_t n, std::size_t d, double noise, std::mt19937_64& rng,
                                    std::vector<double>& u) {
  std::normal_distribution<double> g;
  u = gaussian(d, rng);
  const double un = norm(u);
  for (double& v : u) v /= un;
  std::vector<std::vector<double>> rows;
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r = gaussian(d, rng);
    scores.push_back(std::inner_product(u.begin(), u.end(), r.begin(), 0.0) + noise * g(rng));
    rows.push_back(std::move(r));
  }
  return make_set(rows, scores);
}

// Alternating labels; positives shifted by one Gaussian offset.
inline ActivationSet clustered(std::size_t n, std::size_t d, std::mt19937_64& rng, std::string layer = "block2") {
  std::normal_distribution<double> g;
  const auto shift = gaussian(d, rng);
  Tensor acts(Shape{n, d});
  std::vector<double> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    labels[r] = static_cast<double>(r % 2);
    for (std::size_t i = 0; i < d; ++i) acts[r * d + i] = g(rng) + (r % 2 ? shift[i] : 0.0);
  }
  return {std::move(layer), std::move(acts), std::move(labels)};
}

}  // namespace lcrreg::oracle

#endif  // LCRREG_TESTS_SUPPORT_ORACLE_SETS_HPP_
