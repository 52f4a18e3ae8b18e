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

#ifndef LCRREG_TRAINER_HPP_
#define LCRREG_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lcrreg/concept_bank.hpp"
#include "lcrreg/elements.hpp"
#include "lcrreg/lcr.hpp"
#include "lcrreg/network.hpp"
#include "lcrreg/regularizer.hpp"

namespace lcrreg {

enum class ScheduleKind { kStatic, kDynamic, kThreeStage };
std::string to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& s);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kStatic;
  // static
  double alpha_final = 100.0;
  std::size_t start_epoch = 0;
  // dynamic: linear from (alpha0, beta0) to (alpha1, beta1) over ramp_epochs
  // (0 = the whole run), then held
  double alpha0 = 0.0, beta0 = 1.0;
  double alpha1 = 100.0, beta1 = 1.0;
  std::size_t ramp_epochs = 0;
  // three-stage: stage III takes the remaining epochs
  std::size_t stage1_epochs = 0;
  std::size_t stage2_epochs = 0;

  void validate(std::size_t total_epochs) const;  // ConfigError
};

void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);

struct Weights {
  double alpha = 0.0;
  double beta = 1.0;
  friend bool operator==(const Weights&, const Weights&) = default;
};

Weights schedule_weights(const Schedule& s, std::size_t epoch, std::size_t total_epochs);
// 1 = stage I, 2 = stage II, 3 = stage III; always 1 for the other kinds.
int schedule_stage(const Schedule& s, std::size_t epoch);
// First epoch whose alpha is positive, if any.
std::optional<std::size_t> regularisation_start(const Schedule& s, std::size_t total_epochs);
// Epochs at which LCRs are refit: multiples of the interval, or only the
// regularisation start when the interval is unset.
std::vector<std::size_t> recompute_epochs(const Schedule& s, std::size_t total_epochs,
                                          std::optional<std::size_t> interval);

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void to_json(nlohmann::json& j, const AdamConfig& a);
void from_json(const nlohmann::json& j, AdamConfig& a);

// Adam with L2 weight decay added to the gradient. Parameters outside the
// trainable set keep their values and their moment state.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(ad::Graph& g, const ad::Gradients& grads, const std::set<std::string>& trainable);

 private:
  struct State {
    Tensor m, v;
    std::uint64_t t = 0;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
};

enum class Method { kLcrReg, kVanilla, kLinearProbe, kMultitask };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct TrainConfig {
  ModelSpec model;
  Method method = Method::kLcrReg;
  std::filesystem::path dataset_dir;   // used by the path-based entry point
  std::filesystem::path concepts_dir;  // contains one bank directory per concept
  std::vector<std::string> concepts;   // empty: the task's target shapes
  std::vector<std::string> taps;       // empty: the last block
  LcrKind lcr = LcrKind::kFilterCav;
  LcrFitOptions lcr_options;
  LossConfig loss;
  Schedule schedule;
  std::optional<std::size_t> recompute_interval;  // unset: once
  AdamConfig optimizer;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double aux_weight = 1.0;
  std::size_t eval_val_every = 1;  // 0: final epoch only
  bool stage2_freeze_above = false;
  std::filesystem::path checkpoint;  // empty: not written

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochRecord {
  std::size_t epoch = 0;
  double main_loss = 0.0;
  double reg_loss = 0.0;  // NaN when no LCRs are set
  double alpha = 0.0;
  double beta = 1.0;
  bool recompute = false;
  double val_ba = 0.0;  // NaN when not evaluated
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double seconds = 0.0;
  std::size_t recompute_count() const;
};

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path);

struct TrainResult {
  Network net;
  TrainHistory history;
  std::vector<TapLcrs> lcrs;  // last fitted LCRs, empty for baselines
};

// Pooled bank activations at `layer`: positives labelled 1, negatives 0, or
// the continuous scores for banks without negatives.
ActivationSet bank_activations(Network& net, const ConceptBank& bank, const std::string& layer);

// One LCR per (tap, concept), laid out by tap.
std::vector<TapLcrs> recompute_lcrs(Network& net, const std::vector<ConceptBank>& banks,
                                    const std::vector<std::string>& taps, LcrKind kind,
                                    const LcrFitOptions& opts = {});

// Resolved tap list and concept names for a config and task.
std::vector<std::string> resolve_taps(const TrainConfig& cfg);
std::vector<std::string> resolve_concepts(const TrainConfig& cfg, const TaskSpec& task);

// Banks are matched to concepts by name. Vanilla runs need no banks.
TrainResult run_training(const TrainConfig& cfg, const Dataset& data, const std::vector<ConceptBank>& banks);
// Loads the dataset and banks named in the config.
TrainResult run_training(const TrainConfig& cfg);

std::vector<ConceptBank> load_banks(const std::filesystem::path& dir, const std::vector<std::string>& names);

std::vector<int> predict(Network& net, const std::vector<Image>& images, std::size_t batch = 100);

struct GridPoint {
  nlohmann::json overrides;  // JSON pointer -> value
  double val_ba = 0.0;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
  TrainConfig best_config;
};

// Exhaustive sweep. `grid` maps JSON pointers into the config to candidate
// value lists; the best point maximises validation balanced accuracy (first
// wins on ties).
GridResult grid_search(const TrainConfig& base, const nlohmann::json& grid, const Dataset& data,
                       const std::vector<ConceptBank>& banks);

}  // namespace lcrreg

#endif  // LCRREG_TRAINER_HPP_
