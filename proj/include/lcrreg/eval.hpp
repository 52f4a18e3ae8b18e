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

#ifndef LCRREG_EVAL_HPP_
#define LCRREG_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcrreg/concept_bank.hpp"
#include "lcrreg/elements.hpp"
#include "lcrreg/image.hpp"
#include "lcrreg/metrics.hpp"
#include "lcrreg/network.hpp"
#include "lcrreg/trainer.hpp"

namespace lcrreg {

// Test splits by short name: base, spurious, reversed, decorrelated.
inline const std::vector<std::string> kReportSplits{"base", "spurious", "reversed", "decorrelated"};
std::string test_split_name(const std::string& short_name);  // "base" -> "test_base"

struct SplitReport {
  std::string split;
  double ba = 0.0;
  std::vector<double> recalls;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<SplitReport> splits;
  const SplitReport& at(const std::string& split) const;
};

void to_json(nlohmann::json& j, const EvalReport& r);

EvalReport evaluate(Network& net, const Dataset& data, const std::vector<std::string>& splits = kReportSplits);
// Same, for predictions that did not come from the network's own head.
SplitReport split_report(const std::string& split, const std::vector<int>& predictions, const SplitData& data,
                         std::size_t classes);

// |d logit_class / d pixel|, max over colour channels, as an [H,W] tensor.
Tensor input_gradient_saliency(Network& net, const Image& image, int cls);
// Min-max normalised heat rendered with viridis and blended 50/50 over the
// image. A constant map renders as the lowest colour.
Image saliency_overlay(const Image& image, const Tensor& saliency);
Rgb viridis(double t);

// Share of saliency that falls on striped element pixels.
double marker_saliency_fraction(const Tensor& saliency, const SampleRecord& record);

struct BankPlan {
  std::size_t count = 128;
  int n = 5;
  TexturePolicy texture = TexturePolicy::kMixed;
};

struct SuiteConfig {
  TaskKind task = TaskKind::kBinary1Concept;
  MarkerKind marker = MarkerKind::kStripes;
  std::vector<double> p_sc{1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SplitCounts counts;
  BankPlan bank;
  // vanilla, lcrreg, linear-probe, multitask, pcbm-h (post hoc on the
  // vanilla model of the same seed).
  std::vector<std::string> methods{"vanilla", "lcrreg"};
  TrainConfig train;  // method, seed and num_classes are set per run
  std::string primary_split = "decorrelated";
  std::size_t workers = 1;

  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const SuiteConfig& c);
void from_json(const nlohmann::json& j, SuiteConfig& c);

struct RunRecord {
  std::string method;
  double p_sc = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  EvalReport report;
  double seconds = 0.0;
};

struct SuiteResult {
  std::vector<RunRecord> runs;  // ordered by (p_sc, seed, method)
  bool all_ok() const;
  // Primary-split BA per seed for one method, in seed order; NaN for failures.
  std::vector<double> scores(const std::string& method, double p_sc, const std::string& split) const;
};

// Every method of a (p_sc, seed) cell sees the same generated data and banks.
// Cells run on `workers` threads.
SuiteResult run_experiment_suite(const SuiteConfig& suite);

// summary.csv: method,p_sc,seed,split,ba,t,t_p,wilcoxon_p with one row per
// run, "mean" and "std" rows per method and a "test" row per method other
// than vanilla (paired against vanilla; ba holds the mean difference).
void write_summary_csv(const SuiteConfig& suite, const SuiteResult& result, const std::filesystem::path& path);
// runs.csv: one row per run and split, plus failures.
void write_runs_csv(const SuiteResult& result, const std::filesystem::path& path);

// Data and banks for one suite cell.
Dataset suite_dataset(const SuiteConfig& suite, double p_sc, std::uint64_t seed);
std::vector<ConceptBank> suite_banks(const SuiteConfig& suite, std::uint64_t seed);

}  // namespace lcrreg

#endif  // LCRREG_EVAL_HPP_
