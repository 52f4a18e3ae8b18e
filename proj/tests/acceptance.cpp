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


// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lcrreg/concept_bank.hpp"
#include "lcrreg/elements.hpp"
#include "lcrreg/eval.hpp"
#include "lcrreg/graph.hpp"
#include "lcrreg/lcr.hpp"
#include "lcrreg/metrics.hpp"
#include "lcrreg/network.hpp"
#include "lcrreg/pcbm.hpp"
#include "lcrreg/regularizer.hpp"
#include "lcrreg/trainer.hpp"
#include "support/oracle_sets.hpp"

namespace lcrreg {
namespace {

// Tolerances and thresholds.
constexpr int kGradientConfigs = 50;
constexpr double kGradientStep = 1e-6;
constexpr double kGradientTolerance = 1e-4;
constexpr int kLossPairs = 10000;
constexpr double kAlgebraTolerance = 1e-9;
constexpr double kDbTolerance = 1e-12;
constexpr double kRcvCosine = 0.99;
constexpr double kFilterCosine = 0.999;
constexpr double kCarHeldOut = 0.95;
constexpr double kLinearHeldOut = 0.6;
constexpr double kBankAccuracy = 0.9;
constexpr double kSignificance = 0.01;
constexpr double kReversedGap = 0.10;
constexpr double kVanillaReversedCeiling = 0.40;
constexpr double kWilcoxonSixPositive = 0.03125;

constexpr std::size_t kSeeds = 10;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. Gradients of the full objective on random small networks.

struct Combo {
  LcrKind kind;
  LossVariant variant;
};

// |analytic - numeric| / max(|analytic|, |numeric|) over one parameter
// tensor, with central differences.
double relative_gradient_error(ad::Graph& graph, const ad::Feeds& feeds, ad::NodeId out, const std::string& p) {
  const ad::NodeId outs[] = {out};
  graph.forward(feeds, outs);
  const Tensor analytic = graph.backward(out).at(p);
  Tensor& value = graph.parameter_value(p);
  double diff = 0.0, an = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double orig = value[i];
    value[i] = orig + kGradientStep;
    graph.forward(feeds, outs);
    const double up = graph.value(out).item();
    value[i] = orig - kGradientStep;
    graph.forward(feeds, outs);
    const double down = graph.value(out).item();
    value[i] = orig;
    const double numeric = (up - down) / (2.0 * kGradientStep);
    diff += (analytic[i] - numeric) * (analytic[i] - numeric);
    an += analytic[i] * analytic[i];
    nn += numeric * numeric;
  }
  graph.forward(feeds, outs);
  const double scale = std::sqrt(std::max(an, nn));
  return scale > 0.0 ? std::sqrt(diff) / scale : 0.0;
}

Verdict gradient_check() {
  const std::vector<Combo> combos{{LcrKind::kFilterCav, LossVariant::kSubspaceCosine},
                                  {LcrKind::kPatternCav, LossVariant::kSubspaceCosine},
                                  {LcrKind::kRcv, LossVariant::kSubspaceCosine},
                                  {LcrKind::kFilterCav, LossVariant::kDecisionBoundary},
                                  {LcrKind::kPatternCav, LossVariant::kDecisionBoundary},
                                  {LcrKind::kCar, LossVariant::kDecisionBoundary},
                                  {LcrKind::kRcv, LossVariant::kDecisionBoundary}};
  std::mt19937_64 rng(20260101);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> alpha(0.5, 100.0), beta(0.1, 1.0);
  double worst = 0.0;
  int failed = 0;
  std::string worst_case;
  for (int trial = 0; trial < kGradientConfigs; ++trial) {
    const Combo combo = combos[static_cast<std::size_t>(trial) % combos.size()];
    ModelSpec spec;
    spec.input_size = 8;
    spec.channels = {pick(2, 4), pick(2, 5)};
    spec.num_classes = pick(2, 3);
    Network net = Network::build(spec, rng());
    // Zero biases put whole dead regions exactly on the relu kink.
    for (const auto& p : net.graph().parameter_names()) {
      if (p.ends_with(".bias")) {
        for (double& v : net.graph().parameter_value(p).data()) v = 0.1 * g(rng);
      }
    }
    const std::vector<TapSet> tap_choices{{"block1"}, {"block2"}, {"block1", "block2"}};
    const TapSet taps = tap_choices[pick(0, 2)];
    const std::size_t concepts = pick(1, 2), batch = pick(3, 5);

    // LCRs are fitted on the network's own activations of noise images.
    auto noise = [&](std::size_t n) {
      Tensor t(Shape{n, 3, 8, 8});
      for (double& v : t.data()) v = 0.5 + 0.3 * g(rng);
      return t;
    };
    std::vector<TapLcrs> lcrs;
    const auto fit_acts = pooled_activations(net, noise(24), taps);
    for (const auto& tap : taps) {
      TapLcrs tl{tap, {}};
      const Tensor& acts = fit_acts.at(tap);
      for (std::size_t k = 0; k < concepts; ++k) {
        std::vector<double> labels(acts.dim(0));
        for (std::size_t r = 0; r < labels.size(); ++r) {
          labels[r] = needs_scores(combo.kind) ? g(rng) : static_cast<double>((r + k) % 2);
        }
        LcrFitOptions opts;
        opts.hinge_iterations = 500;
        tl.lcrs.push_back(fit_lcr(combo.kind, {tap, acts, labels}, opts));
      }
      lcrs.push_back(std::move(tl));
    }

    ad::Graph& graph = net.graph();
    const ad::NodeId main = graph.softmax_cross_entropy(net.logits(), graph.input("labels"));
    std::vector<std::pair<std::string, ad::NodeId>> tap_nodes;
    for (const auto& tap : taps) tap_nodes.emplace_back(tap, net.pooled(tap));
    LossConfig loss;
    loss.variant = combo.variant;
    loss.c = 0.5 + 2.0 * std::uniform_real_distribution<double>()(rng);
    RegularizerGraph reg(graph, tap_nodes, combo.kind, concepts, loss);
    reg.set_lcrs(graph, lcrs);
    const CombinedLoss total = combine_losses(graph, main, reg.loss());
    graph.set_constant(total.alpha, Tensor::scalar(alpha(rng)));
    graph.set_constant(total.beta, Tensor::scalar(beta(rng)));

    Tensor labels(Shape{batch});
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<double>(pick(0, spec.num_classes - 1));
    const ad::Feeds feeds{{"images", noise(batch)}, {"labels", labels}};
    for (const auto& p : graph.parameter_names()) {
      const double err = relative_gradient_error(graph, feeds, total.total, p);
      if (!(err < kGradientTolerance)) ++failed;
      if (!(err <= worst)) {
        worst = err;
        worst_case = to_string(combo.kind) + "/" + to_string(combo.variant) + " config " + std::to_string(trial) + " " + p;
      }
    }
  }
  return {failed == 0, std::to_string(kGradientConfigs) + " configs, worst tensor relative error " + fmt(worst) + " (" +
                           worst_case + "), " + std::to_string(failed) + " parameter tensors over " +
                           fmt(kGradientTolerance)};
}

// ---------------------------------------------------------------------------
// 2. Loss bounds and algebra.

Verdict loss_algebra() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(2, 16), rank(1, 4);
  std::uniform_real_distribution<double> scale(1e-3, 1e3), length(4.0, 400.0);
  double lo = 1.0, hi = 0.0, idem = 0.0, inv = 0.0;
  for (int trial = 0; trial < kLossPairs; ++trial) {
    const std::size_t d = dim(rng);
    std::vector<std::vector<double>> vs;
    for (std::size_t i = 0, n = std::min(rank(rng), d); i < n; ++i) vs.push_back(oracle::gaussian(d, rng));
    const ConceptSubspace s = orthonormal_basis(vs);
    auto x = oracle::gaussian(d, rng);
    const double len = length(rng), xn = oracle::norm(x);
    for (double& v : x) v *= len / xn;
    const double l = subspace_cosine_loss(x, s);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    const auto p = project(x, s);
    const auto pp = project(p, s);
    for (std::size_t i = 0; i < d; ++i) idem = std::max(idem, std::abs(pp[i] - p[i]));
    const double a = std::max(scale(rng), 4.0 / len);
    for (double& v : x) v *= a;
    inv = std::max(inv, std::abs(subspace_cosine_loss(x, s) - l));
  }
  LossConfig cfg;
  cfg.variant = LossVariant::kDecisionBoundary;
  const double at_zero = db_loss(std::vector<double>{0.0}, cfg);
  const double at_c = db_loss(std::vector<double>{cfg.c}, cfg);
  const bool bounds = lo >= 0.0 && hi <= 1.0;
  const bool algebra = idem <= kAlgebraTolerance && inv <= kAlgebraTolerance;
  const bool db = std::abs(at_zero - 1.0) <= kDbTolerance && std::abs(at_c - std::exp(-1.0)) <= kDbTolerance;
  return {bounds && algebra && db, "loss range [" + fmt(lo) + ", " + fmt(hi) + "] over " + std::to_string(kLossPairs) +
                                       " pairs, idempotence " + fmt(idem, 3) + ", scale " + fmt(inv, 3) +
                                       ", db(0)=" + fmt(at_zero, 17) + ", db(c)-exp(-1)=" + fmt(at_c - std::exp(-1.0), 3)};
}

// ---------------------------------------------------------------------------
// 3. LCR fitters against oracles.

Verdict lcr_oracles() {
  // Pattern-CAV: positives mean (2,0), negatives mean (0,2).
  const Lcr pattern = fit_pattern_cav(oracle::make_set({{1, 0}, {3, 0}, {0, 1}, {0, 3}}, {1, 1, 0, 0}));
  const std::vector<double> hand{2.0 / std::sqrt(8.0), -2.0 / std::sqrt(8.0)};
  const bool pattern_ok = pattern.direction == hand;

  std::mt19937_64 rng(11);
  std::vector<double> u;
  const Lcr rcv = fit_rcv(oracle::planted_scores(200, 8, 0.1, rng, u));
  const double rcv_cos = oracle::cosine(rcv.direction, u);

  const Lcr filter = fit_filter_cav(oracle::symmetric_separable(10, 1));
  const double filter_cos = oracle::cosine(filter.direction, {1.0, 0.0});

  const ActivationSet xor_train = oracle::xor_set(50, 5), grid = oracle::xor_grid();
  const double car = lcr_holdout_score(fit_car(xor_train), grid);
  const double linear = lcr_holdout_score(fit_filter_cav(xor_train), grid);

  const bool pass = pattern_ok && rcv_cos >= kRcvCosine && filter_cos >= kFilterCosine && car >= kCarHeldOut &&
                    linear <= kLinearHeldOut;
  return {pass, std::string("pattern ") + (pattern_ok ? "exact" : "mismatch") + ", rcv cos " + fmt(rcv_cos, 6) +
                    ", filter cos " + fmt(filter_cos, 8) + ", xor held-out car " + fmt(car) + " vs linear " + fmt(linear)};
}

// ---------------------------------------------------------------------------
// Shared training setup for the Elements experiments.

TrainConfig experiment_train_config() {
  TrainConfig c;
  c.model.channels = {8, 16, 32, 64};
  c.lcr = LcrKind::kFilterCav;
  c.loss.variant = LossVariant::kSubspaceCosine;
  c.schedule.kind = ScheduleKind::kStatic;
  c.schedule.alpha_final = 100.0;
  c.schedule.start_epoch = 0;
  c.recompute_interval.reset();
  c.optimizer.lr = 1e-2;
  c.epochs = 20;
  c.batch_size = 32;
  c.eval_val_every = 0;
  return c;
}

SplitCounts experiment_counts() { return {300, 100, 400}; }

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// 4. Concept-bank coherence.

Verdict bank_coherence() {
  const TaskSpec task = TaskSpec::make(TaskKind::kBinary1Concept);
  SpuriousSpec clean;
  clean.p_sc = 0.0;
  const Dataset data = generate_dataset(task, clean, experiment_counts(), 404);
  TrainConfig cfg = experiment_train_config();
  cfg.method = Method::kVanilla;
  cfg.seed = 404;
  Network net = run_training(cfg, data, {}).net;
  const std::string layer = resolve_taps(cfg).front();

  const ShapeKind shape = task.targets.front();
  const std::string name = to_string(shape);
  constexpr std::size_t kTrainPairs = 128, kHeldOutPairs = 64, kHeldOutFirst = 100000;
  std::map<int, double> acc;
  for (int n : {5, 1}) {
    const ConceptBank fit = build_bank(name, make_backgrounds(shape, kTrainPairs, 41, TexturePolicy::kMixed),
                                       make_sources(shape, kElementsSourcePool, 41, TexturePolicy::kMixed),
                                       kTrainPairs, n, 41);
    const ConceptBank held = build_bank(
        name, make_backgrounds(shape, kHeldOutPairs, 41, TexturePolicy::kMixed, kHeldOutFirst),
        make_sources(shape, kElementsSourcePool, 41, TexturePolicy::kMixed, kHeldOutFirst), kHeldOutPairs, n, 42);
    const Lcr cav = fit_filter_cav(bank_activations(net, fit, layer));
    acc[n] = lcr_holdout_score(cav, bank_activations(net, held, layer));
  }
  return {acc[5] >= kBankAccuracy && acc[1] < acc[5],
          "held-out filter-CAV accuracy at " + layer + ": N=5 " + fmt(acc[5]) + ", N=1 " + fmt(acc[1])};
}

// ---------------------------------------------------------------------------
// 5-7. Paired robustness experiments.

SuiteConfig robustness_suite(TaskKind task) {
  SuiteConfig s;
  s.task = task;
  s.marker = MarkerKind::kStripes;
  s.p_sc = {1.0};
  s.seeds.resize(kSeeds);
  std::iota(s.seeds.begin(), s.seeds.end(), 0);
  s.counts = experiment_counts();
  s.methods = {"vanilla", "lcrreg"};
  s.train = experiment_train_config();
  s.primary_split = "decorrelated";
  s.workers = workers();
  return s;
}

const SuiteResult& suite_result(TaskKind task) {
  static std::map<TaskKind, SuiteResult> cache;
  auto it = cache.find(task);
  if (it == cache.end()) it = cache.emplace(task, run_experiment_suite(robustness_suite(task))).first;
  return it->second;
}

std::optional<std::string> failures(const SuiteResult& r) {
  if (r.all_ok()) return std::nullopt;
  std::string out;
  for (const auto& run : r.runs) {
    if (!run.ok) out += run.method + " seed " + std::to_string(run.seed) + ": " + run.error + "; ";
  }
  return out;
}

Verdict decorrelated_significance() {
  const auto& r = suite_result(TaskKind::kBinary1Concept);
  if (auto f = failures(r)) return {false, "failed runs: " + *f};
  const auto reg = r.scores("lcrreg", 1.0, "decorrelated");
  const auto van = r.scores("vanilla", 1.0, "decorrelated");
  const auto t = paired_tests(reg, van);
  return {t.mean_difference > 0.0 && t.t_p < kSignificance,
          "decorrelated BA lcrreg " + fmt(mean(reg)) + " vs vanilla " + fmt(mean(van)) + ", paired t " + fmt(t.t) +
              " p " + fmt(t.t_p, 3) + " (wilcoxon p " + fmt(t.wilcoxon_p, 3) + ")"};
}

Verdict reversed_gap() {
  const auto& r = suite_result(TaskKind::kBinary1Concept);
  if (auto f = failures(r)) return {false, "failed runs: " + *f};
  const double reg = mean(r.scores("lcrreg", 1.0, "reversed"));
  const double van = mean(r.scores("vanilla", 1.0, "reversed"));
  return {reg - van >= kReversedGap && van < kVanillaReversedCeiling,
          "reversed BA lcrreg " + fmt(reg) + " vs vanilla " + fmt(van) + ", gap " + fmt(reg - van)};
}

Verdict other_settings() {
  bool pass = true;
  std::string detail;
  for (TaskKind task : {TaskKind::kBinaryMultiConcept, TaskKind::kMulticlass1Concept, TaskKind::kMulticlassMultiConcept}) {
    const auto& r = suite_result(task);
    if (auto f = failures(r)) return {false, to_string(task) + " failed runs: " + *f};
    const double reg = mean(r.scores("lcrreg", 1.0, "decorrelated"));
    const double van = mean(r.scores("vanilla", 1.0, "decorrelated"));
    pass = pass && reg >= van;
    detail += (detail.empty() ? "" : ", ") + to_string(task) + " " + fmt(reg) + " vs " + fmt(van);
  }
  return {pass, "decorrelated BA lcrreg vs vanilla: " + detail};
}

// ---------------------------------------------------------------------------
// 8. Schedules, recomputation and the alpha = 0 identity.

struct SmallWorld {
  Dataset data;
  std::vector<ConceptBank> banks;
};

const SmallWorld& small_world() {
  static const SmallWorld w = [] {
    SmallWorld x;
    SpuriousSpec sp;
    x.data = generate_dataset(TaskSpec::make(TaskKind::kBinary1Concept), sp, {32, 12, 8}, 8);
    x.banks.push_back(make_elements_bank(ShapeKind::kSquare, 16, 3, 8, TexturePolicy::kMixed));
    return x;
  }();
  return w;
}

TrainConfig small_config(Method m) {
  TrainConfig c;
  c.model.channels = {4, 6};
  c.method = m;
  c.epochs = 6;
  c.batch_size = 8;
  c.seed = 8;
  c.eval_val_every = 0;
  c.lcr_options.hinge_iterations = 200;
  return c;
}

Verdict schedule_exactness() {
  const auto& w = small_world();
  int mismatched = 0, recompute_wrong = 0;
  for (auto kind : {ScheduleKind::kStatic, ScheduleKind::kDynamic, ScheduleKind::kThreeStage}) {
    auto cfg = small_config(Method::kLcrReg);
    cfg.schedule.kind = kind;
    cfg.schedule.start_epoch = 2;
    cfg.schedule.alpha_final = 3.0;
    cfg.schedule.alpha0 = 0.5;
    cfg.schedule.alpha1 = 8.0;
    cfg.schedule.beta1 = 0.25;
    cfg.schedule.stage1_epochs = 2;
    cfg.schedule.stage2_epochs = 2;
    const auto r = run_training(cfg, w.data, w.banks);
    for (std::size_t t = 0; t < cfg.epochs; ++t) {
      const Weights want = schedule_weights(cfg.schedule, t, cfg.epochs);
      if (r.history.epochs.at(t).alpha != want.alpha || r.history.epochs.at(t).beta != want.beta) ++mismatched;
    }
  }
  std::string counts;
  for (std::size_t interval : {1, 2, 4, 5}) {
    auto cfg = small_config(Method::kLcrReg);
    cfg.recompute_interval = interval;
    const auto r = run_training(cfg, w.data, w.banks);
    const std::size_t want = (cfg.epochs + interval - 1) / interval;
    if (r.history.recompute_count() != want) ++recompute_wrong;
    counts += (counts.empty() ? "" : " ") + std::to_string(r.history.recompute_count()) + "/" + std::to_string(want);
  }
  auto zero = small_config(Method::kLcrReg);
  zero.schedule.alpha_final = 0.0;
  const auto reg = run_training(zero, w.data, w.banks);
  const auto van = run_training(small_config(Method::kVanilla), w.data, w.banks);
  bool identical = true;
  for (const auto& p : van.net.graph().parameter_names()) {
    identical = identical && reg.net.graph().parameter_value(p) == van.net.graph().parameter_value(p);
  }
  for (std::size_t t = 0; t < zero.epochs; ++t) {
    identical = identical && reg.history.epochs[t].main_loss == van.history.epochs[t].main_loss;
  }
  return {mismatched == 0 && recompute_wrong == 0 && identical,
          std::to_string(mismatched) + " schedule mismatches over 3 schemes, recomputes " + counts +
              ", alpha=0 " + (identical ? "bitwise identical" : "differs") + " to vanilla"};
}

// ---------------------------------------------------------------------------
// 9. PCBM-h.

Verdict pcbm_sanity() {
  const TaskSpec task = TaskSpec::make(TaskKind::kMulticlassMultiConcept);
  std::vector<ConceptBank> banks;
  for (ShapeKind s : task.targets) banks.push_back(make_elements_bank(s, 32, 5, 9, TexturePolicy::kMixed));
  int worse = 0, residual_mismatch = 0;
  double min_gain = 1.0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    SpuriousSpec sp;
    sp.p_sc = 0.5;
    const Dataset d = generate_dataset(task, sp, {60, 8, 8}, seed);
    TrainConfig cfg;
    cfg.model.channels = {6, 12};
    cfg.model.num_classes = task.classes;
    cfg.method = Method::kVanilla;
    cfg.epochs = 4;
    cfg.batch_size = 10;
    cfg.seed = seed;
    cfg.eval_val_every = 0;
    Network net = run_training(cfg, d, {}).net;
    const auto& train = d.split("train");
    std::vector<int> y;
    for (const auto& r : train.records) y.push_back(r.label);
    PcbmOptions opts;
    opts.cav.hinge_iterations = 500;
    PcbmHead head = fit_pcbm_h(net, banks, train.images, y, task.classes, opts);
    const Tensor f = final_features(net, train.images);
    auto accuracy = [&](const std::vector<int>& p) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < p.size(); ++i) hits += p[i] == y[i];
      return static_cast<double>(hits) / static_cast<double>(p.size());
    };
    const auto plain = pcbm_predict(head, f, false);
    const double gain = accuracy(pcbm_predict(head, f, true)) - accuracy(plain);
    min_gain = std::min(min_gain, gain);
    if (gain < 0.0) ++worse;
    for (double& v : head.residual_weights.data()) v = 0.0;
    if (pcbm_predict(head, f, true) != plain) ++residual_mismatch;
  }
  return {worse == 0 && residual_mismatch == 0,
          "PCBM-h minus PCBM train accuracy >= " + fmt(min_gain) + " over " + std::to_string(kSeeds) + " seeds, " +
              std::to_string(residual_mismatch) + " zero-residual mismatches"};
}

// ---------------------------------------------------------------------------
// 10. Statistics oracles.

Verdict statistics_oracles() {
  const std::vector<double> a{1.5, 2.0, 0.5, 3.0, 1.0, 2.5}, zero(6, 0.0);
  const auto six = paired_tests(a, zero);
  const bool exact = six.exact && six.wilcoxon_p == kWilcoxonSixPositive;

  const std::vector<double> x{0.61, 0.72, 0.55, 0.68, 0.70, 0.59, 0.66, 0.74};
  const std::vector<double> y{0.52, 0.70, 0.57, 0.60, 0.61, 0.58, 0.63, 0.66};
  const auto xy = paired_tests(x, y), yx = paired_tests(y, x);
  const bool symmetric = xy.t == -yx.t && xy.t_p == yx.t_p && xy.wilcoxon_p == yx.wilcoxon_p;

  struct Case {
    std::vector<int> pred, labels;
    std::size_t classes;
    double want;
  };
  const std::vector<Case> cases{
      {{0, 1, 0, 1}, {0, 0, 1, 1}, 2, 0.5},
      {{0, 0, 1, 1}, {0, 0, 1, 1}, 2, 1.0},
      {{1, 1, 0, 0}, {0, 0, 1, 1}, 2, 0.0},
      // recalls 1, 1/2, 1/4, 0
      {{0, 1, 0, 2, 0, 0, 0, 1, 1, 1, 1, 1}, {0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3}, 4, 0.4375},
  };
  int ba_wrong = 0;
  for (const auto& c : cases) ba_wrong += balanced_accuracy(c.pred, c.labels, c.classes) != c.want;
  // Majority guess on a 9:1 split: accuracy 0.9, balanced accuracy 0.5.
  std::vector<int> labels(100, 0), majority(100, 0);
  std::fill(labels.begin() + 90, labels.end(), 1);
  ba_wrong += balanced_accuracy(majority, labels, 2) != 0.5;

  return {exact && symmetric && ba_wrong == 0,
          "wilcoxon n=6 p " + fmt(six.wilcoxon_p, 17) + ", swap t " + fmt(xy.t) + "/" + fmt(yx.t) + " " +
              (symmetric ? "symmetric" : "asymmetric") + ", " + std::to_string(ba_wrong) + " balanced-accuracy misses"};
}

}  // namespace
}  // namespace lcrreg

int main(int argc, char** argv) {
  using namespace lcrreg;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, gradient_check},     {2, loss_algebra},        {3, lcr_oracles},
      {4, bank_coherence},     {5, decorrelated_significance}, {6, reversed_gap},
      {7, other_settings},     {8, schedule_exactness},  {9, pcbm_sanity},
      {10, statistics_oracles}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  bool all = true;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && v.pass;
    std::printf("criterion %2d %s  %s  [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
