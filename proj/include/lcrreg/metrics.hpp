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

#ifndef LCRREG_METRICS_HPP_
#define LCRREG_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace lcrreg {

struct BalancedAccuracy {
  double value = 0.0;
  std::vector<double> recalls;      // NaN for classes absent from the labels
  std::vector<std::size_t> support;  // label count per class
  std::vector<int> absent;           // classes excluded from the mean
};

// Mean recall over the classes present in `labels`. Absent classes are
// excluded and reported (and a warning is written to stderr).
BalancedAccuracy balanced_accuracy_report(std::span<const int> predictions, std::span<const int> labels,
                                          std::size_t classes);
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels, std::size_t classes);

struct PairedTestResult {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t = 0.0;
  double t_p = 1.0;
  std::size_t nonzero = 0;  // differences entering the signed-rank test
  double w_plus = 0.0;
  bool exact = true;
  double wilcoxon_p = 1.0;
};

inline constexpr std::size_t kWilcoxonExactMax = 20;
inline constexpr double kVarianceGuard = 1e-24;

// Two-sided paired t-test and Wilcoxon signed-rank test on a - b. Needs at
// least five pairs.
PairedTestResult paired_tests(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace lcrreg

#endif  // LCRREG_METRICS_HPP_
