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

#ifndef LCRREG_LCR_HPP_
#define LCRREG_LCR_HPP_

// Latent concept representations fitted on pooled activations.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcrreg/tensor.hpp"

namespace lcrreg {

// Rows of `acts` are samples. Binary sets use labels 0/1 (1 = concept
// present); continuous sets carry concept scores.
struct ActivationSet {
  std::string layer;
  Tensor acts;  // [n, d]
  std::vector<double> labels;

  std::size_t rows() const { return acts.rank() == 2 ? acts.dim(0) : 0; }
  std::size_t dim() const { return acts.rank() == 2 ? acts.dim(1) : 0; }
  void validate() const;  // ShapeError
};

enum class LcrKind { kFilterCav, kPatternCav, kCar, kRcv };

std::string to_string(LcrKind k);
LcrKind parse_lcr_kind(const std::string& s);
// filter-cav and car carry a decision boundary; all but car carry a direction.
inline bool has_direction(LcrKind k) { return k != LcrKind::kCar; }
inline bool needs_scores(LcrKind k) { return k == LcrKind::kRcv; }

struct LcrFitOptions {
  double hinge_lambda = 1e-2;
  int hinge_iterations = 5000;
  double car_lambda = 1e-3;
  double car_bandwidth = 0.0;  // <= 0: median pairwise distance
  double rcv_lambda = 1e-3;
};

void to_json(nlohmann::json& j, const LcrFitOptions& o);
void from_json(const nlohmann::json& j, LcrFitOptions& o);

// phi(x) = direction . x + bias for the linear kinds, so phi is a signed
// Euclidean distance. For car phi(x) = sum_i dual_i k(support_i, x).
struct Lcr {
  LcrKind kind = LcrKind::kFilterCav;
  std::string concept_name;
  std::string layer;
  std::size_t dim = 0;
  std::vector<double> direction;  // unit norm; empty for car
  double bias = 0.0;
  Tensor support;                 // car: [m, d]
  std::vector<double> dual;       // car
  double bandwidth = 0.0;         // car
  double calib_slope = 1.0;       // rcv: score ~ slope * (direction . x) + intercept
  double calib_intercept = 0.0;
  LcrFitOptions options;

  double phi(std::span<const double> x) const;
  std::vector<double> phi_rows(const Tensor& acts) const;
};

Lcr fit_filter_cav(const ActivationSet& set, const LcrFitOptions& opts = {});
Lcr fit_pattern_cav(const ActivationSet& set);
Lcr fit_car(const ActivationSet& set, const LcrFitOptions& opts = {});
Lcr fit_rcv(const ActivationSet& set, const LcrFitOptions& opts = {});
Lcr fit_lcr(LcrKind kind, const ActivationSet& set, const LcrFitOptions& opts = {});

// Accuracy of sign(phi) for binary kinds, held-out R^2 for rcv.
double lcr_holdout_score(const Lcr& lcr, const ActivationSet& held_out);

// Median of the pairwise Euclidean distances between rows.
double median_pairwise_distance(const Tensor& acts);

// <stem>.json holds metadata, <stem>.bin the f64 payload.
void save_lcrs(const std::vector<Lcr>& lcrs, const std::filesystem::path& stem);
std::vector<Lcr> load_lcrs(const std::filesystem::path& stem);

}  // namespace lcrreg

#endif  // LCRREG_LCR_HPP_
