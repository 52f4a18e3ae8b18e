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

#include "lcrreg/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>

#include "lcrreg/error.hpp"

namespace lcrreg {

BalancedAccuracy balanced_accuracy_report(std::span<const int> predictions, std::span<const int> labels,
                                          std::size_t classes) {
  if (labels.empty()) throw ContractError("balanced accuracy of an empty set");
  if (predictions.size() != labels.size()) throw ContractError("predictions and labels differ in length");
  BalancedAccuracy r;
  r.support.assign(classes, 0);
  std::vector<std::size_t> hits(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ContractError("label " + std::to_string(y) + " out of range");
    ++r.support[static_cast<std::size_t>(y)];
    hits[static_cast<std::size_t>(y)] += predictions[i] == y;
  }
  double sum = 0.0;
  std::size_t present = 0;
  r.recalls.assign(classes, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < classes; ++c) {
    if (r.support[c] == 0) {
      r.absent.push_back(static_cast<int>(c));
      continue;
    }
    r.recalls[c] = static_cast<double>(hits[c]) / static_cast<double>(r.support[c]);
    sum += r.recalls[c];
    ++present;
  }
  if (!r.absent.empty()) {
    std::cerr << "warning: balanced accuracy skips " << r.absent.size() << " class(es) with no labels\n";
  }
  r.value = sum / static_cast<double>(present);
  return r;
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels, std::size_t classes) {
  return balanced_accuracy_report(predictions, labels, classes).value;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

// Average ranks of |d|, doubled so ties stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& absd) {
  const std::size_t n = absd.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return absd[a] < absd[b]; });
  std::vector<long> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && absd[order[j + 1]] == absd[order[i]]) ++j;
    const long doubled = static_cast<long>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

PairedTestResult paired_tests(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("paired samples differ in length");
  if (a.size() < 5) throw ContractError("paired tests need at least five pairs");
  PairedTestResult r;
  r.n = a.size();
  std::vector<double> d(r.n);
  for (std::size_t i = 0; i < r.n; ++i) d[i] = a[i] - b[i];

  r.mean_difference = mean(d);
  const double sd = stddev(d);
  const double se = std::sqrt((sd * sd + kVarianceGuard) / static_cast<double>(r.n));
  r.t = r.mean_difference / se;
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.t_p = r.mean_difference == 0.0 ? 1.0 : 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));

  std::vector<double> nz;
  for (double x : d) {
    if (x != 0.0) nz.push_back(x);
  }
  r.nonzero = nz.size();
  if (nz.empty()) {
    r.wilcoxon_p = 1.0;
    return r;
  }
  std::vector<double> absd(nz.size());
  for (std::size_t i = 0; i < nz.size(); ++i) absd[i] = std::abs(nz[i]);
  const auto ranks = doubled_ranks(absd);
  long w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < nz.size(); ++i) {
    total2 += ranks[i];
    if (nz[i] > 0) w2 += ranks[i];
  }
  r.w_plus = static_cast<double>(w2) / 2.0;
  const std::size_t n = nz.size();
  if (n <= kWilcoxonExactMax) {
    r.exact = true;
    // Number of sign assignments giving each doubled positive-rank sum.
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    for (long rk : ranks) {
      for (long s = total2; s >= rk; --s) count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - rk)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) lower += count[static_cast<std::size_t>(s)];
      if (s >= w2) upper += count[static_cast<std::size_t>(s)];
    }
    r.wilcoxon_p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    return r;
  }
  r.exact = false;
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1) / 4.0;
  double var = nn * (nn + 1) * (2 * nn + 1) / 24.0;
  // Tie correction.
  std::vector<long> sorted(ranks);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  const double diff = r.w_plus - mu;
  const double z = var > 0 ? (std::abs(diff) - 0.5) / std::sqrt(var) : 0.0;
  const boost::math::normal normal;
  r.wilcoxon_p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, std::max(z, 0.0))));
  return r;
}

}  // namespace lcrreg
