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

#include "lcrreg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "lcrreg/error.hpp"
#include "lcrreg/image.hpp"
#include "lcrreg/metrics.hpp"
#include "lcrreg/random.hpp"

namespace lcrreg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double lerp(double a, double b, double f) { return a + (b - a) * f; }

}  // namespace

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kStatic: return "static";
    case ScheduleKind::kDynamic: return "dynamic";
    case ScheduleKind::kThreeStage: return "three-stage";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "static") return ScheduleKind::kStatic;
  if (s == "dynamic") return ScheduleKind::kDynamic;
  if (s == "three-stage") return ScheduleKind::kThreeStage;
  throw ConfigError("unknown schedule '" + s + "'");
}

void Schedule::validate(std::size_t total) const {
  if (total == 0) throw ConfigError("training needs at least one epoch");
  switch (kind) {
    case ScheduleKind::kStatic:
      if (alpha_final < 0) throw ConfigError("alpha_final must be non-negative");
      break;
    case ScheduleKind::kDynamic:
      if (alpha0 < 0 || alpha1 < 0 || beta0 < 0 || beta1 < 0) throw ConfigError("dynamic weights must be non-negative");
      break;
    case ScheduleKind::kThreeStage:
      if (stage2_epochs == 0) throw ConfigError("three-stage schedule needs a non-empty stage II");
      if (stage1_epochs + stage2_epochs > total) {
        throw ConfigError("three-stage lengths " + std::to_string(stage1_epochs) + "+" + std::to_string(stage2_epochs) +
                          " exceed " + std::to_string(total) + " epochs");
      }
      if (alpha_final <= 0) throw ConfigError("three-stage stage II weight must be positive");
      break;
  }
}

void to_json(nlohmann::json& j, const Schedule& s) {
  j = {{"kind", to_string(s.kind)},
       {"alpha_final", s.alpha_final},
       {"start_epoch", s.start_epoch},
       {"alpha0", s.alpha0},
       {"beta0", s.beta0},
       {"alpha1", s.alpha1},
       {"beta1", s.beta1},
       {"ramp_epochs", s.ramp_epochs},
       {"stage1_epochs", s.stage1_epochs},
       {"stage2_epochs", s.stage2_epochs}};
}

void from_json(const nlohmann::json& j, Schedule& s) {
  Schedule d;
  s.kind = parse_schedule_kind(j.value("kind", to_string(d.kind)));
  s.alpha_final = j.value("alpha_final", d.alpha_final);
  s.start_epoch = j.value("start_epoch", d.start_epoch);
  s.alpha0 = j.value("alpha0", d.alpha0);
  s.beta0 = j.value("beta0", d.beta0);
  s.alpha1 = j.value("alpha1", d.alpha1);
  s.beta1 = j.value("beta1", d.beta1);
  s.ramp_epochs = j.value("ramp_epochs", d.ramp_epochs);
  s.stage1_epochs = j.value("stage1_epochs", d.stage1_epochs);
  s.stage2_epochs = j.value("stage2_epochs", d.stage2_epochs);
}

Weights schedule_weights(const Schedule& s, std::size_t t, std::size_t total) {
  if (t >= total) throw ContractError("epoch " + std::to_string(t) + " outside a " + std::to_string(total) + "-epoch run");
  s.validate(total);
  switch (s.kind) {
    case ScheduleKind::kStatic:
      return {t < s.start_epoch ? 0.0 : s.alpha_final, 1.0};
    case ScheduleKind::kDynamic: {
      const std::size_t ramp = s.ramp_epochs == 0 ? total : s.ramp_epochs;
      const double f = std::min(1.0, static_cast<double>(t) / static_cast<double>(ramp));
      return {lerp(s.alpha0, s.alpha1, f), lerp(s.beta0, s.beta1, f)};
    }
    case ScheduleKind::kThreeStage:
      if (schedule_stage(s, t) == 2) return {s.alpha_final, 0.0};
      return {0.0, 1.0};
  }
  return {};
}

int schedule_stage(const Schedule& s, std::size_t t) {
  if (s.kind != ScheduleKind::kThreeStage) return 1;
  if (t < s.stage1_epochs) return 1;
  if (t < s.stage1_epochs + s.stage2_epochs) return 2;
  return 3;
}

std::optional<std::size_t> regularisation_start(const Schedule& s, std::size_t total) {
  for (std::size_t t = 0; t < total; ++t) {
    if (schedule_weights(s, t, total).alpha > 0) return t;
  }
  return std::nullopt;
}

std::vector<std::size_t> recompute_epochs(const Schedule& s, std::size_t total, std::optional<std::size_t> interval) {
  std::vector<std::size_t> out;
  if (interval) {
    if (*interval == 0) throw ConfigError("recompute interval must be at least 1");
    for (std::size_t t = 0; t < total; t += *interval) out.push_back(t);
    return out;
  }
  // Fit once where regularisation begins; a run that never regularises still
  // fits at epoch 0 so its LCRs and reg-loss trace exist.
  out.push_back(regularisation_start(s, total).value_or(0));
  return out;
}

void to_json(nlohmann::json& j, const AdamConfig& a) {
  j = {{"lr", a.lr}, {"weight_decay", a.weight_decay}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& a) {
  AdamConfig d;
  a.lr = j.value("lr", d.lr);
  a.weight_decay = j.value("weight_decay", d.weight_decay);
  a.beta1 = j.value("beta1", d.beta1);
  a.beta2 = j.value("beta2", d.beta2);
  a.eps = j.value("eps", d.eps);
}

void Adam::step(ad::Graph& g, const ad::Gradients& grads, const std::set<std::string>& trainable) {
  for (const auto& [name, grad] : grads) {
    if (!trainable.contains(name)) continue;
    Tensor& p = g.parameter_value(name);
    auto& st = state_[name];
    if (st.t == 0) {
      st.m = Tensor(p.shape());
      st.v = Tensor(p.shape());
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = grad[i] + cfg_.weight_decay * p[i];
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p[i] -= cfg_.lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
    }
  }
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kLcrReg: return "lcrreg";
    case Method::kVanilla: return "vanilla";
    case Method::kLinearProbe: return "linear-probe";
    case Method::kMultitask: return "multitask";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "lcrreg") return Method::kLcrReg;
  if (s == "vanilla") return Method::kVanilla;
  if (s == "linear-probe") return Method::kLinearProbe;
  if (s == "multitask") return Method::kMultitask;
  throw ConfigError("unknown method '" + s + "'");
}

void TrainConfig::validate() const {
  model.validate();
  schedule.validate(epochs);
  loss.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (recompute_interval && *recompute_interval == 0) throw ConfigError("recompute interval must be at least 1");
  if (aux_weight < 0) throw ConfigError("aux_weight must be non-negative");
  if (optimizer.lr <= 0) throw ConfigError("learning rate must be positive");
  if (method == Method::kLcrReg && loss.variant == LossVariant::kSubspaceCosine && !has_direction(lcr)) {
    throw ConfigError("the subspace cosine loss needs a direction-based LCR, not " + to_string(lcr));
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"method", to_string(c.method)},
       {"dataset", c.dataset_dir.string()},
       {"concepts_dir", c.concepts_dir.string()},
       {"concepts", c.concepts},
       {"taps", c.taps},
       {"lcr", to_string(c.lcr)},
       {"lcr_options", c.lcr_options},
       {"loss", c.loss},
       {"schedule", c.schedule},
       {"recompute_interval", c.recompute_interval ? nlohmann::json(*c.recompute_interval) : nlohmann::json(nullptr)},
       {"optimizer", c.optimizer},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"aux_weight", c.aux_weight},
       {"eval_val_every", c.eval_val_every},
       {"stage2_freeze_above", c.stage2_freeze_above},
       {"checkpoint", c.checkpoint.string()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  if (j.contains("model")) c.model = j.at("model").get<ModelSpec>();
  c.method = parse_method(j.value("method", to_string(d.method)));
  c.dataset_dir = j.value("dataset", std::string{});
  c.concepts_dir = j.value("concepts_dir", std::string{});
  c.concepts = j.value("concepts", d.concepts);
  c.taps = j.value("taps", d.taps);
  c.lcr = parse_lcr_kind(j.value("lcr", to_string(d.lcr)));
  if (j.contains("lcr_options")) c.lcr_options = j.at("lcr_options").get<LcrFitOptions>();
  if (j.contains("loss")) c.loss = j.at("loss").get<LossConfig>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<Schedule>();
  c.recompute_interval.reset();
  if (j.contains("recompute_interval") && !j.at("recompute_interval").is_null()) {
    const auto& v = j.at("recompute_interval");
    if (v.is_string() && (v == "inf" || v == "infinity")) {
      c.recompute_interval.reset();
    } else {
      c.recompute_interval = v.get<std::size_t>();
    }
  }
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<AdamConfig>();
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.aux_weight = j.value("aux_weight", d.aux_weight);
  c.eval_val_every = j.value("eval_val_every", d.eval_val_every);
  c.stage2_freeze_above = j.value("stage2_freeze_above", d.stage2_freeze_above);
  c.checkpoint = j.value("checkpoint", std::string{});
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::size_t TrainHistory::recompute_count() const {
  return static_cast<std::size_t>(std::count_if(epochs.begin(), epochs.end(), [](const EpochRecord& r) { return r.recompute; }));
}

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,main_loss,reg_loss,alpha,beta,recompute,val_ba\n" << std::setprecision(17);
  for (const auto& r : h.epochs) {
    out << r.epoch << ',' << r.main_loss << ',' << r.reg_loss << ',' << r.alpha << ',' << r.beta << ','
        << (r.recompute ? 1 : 0) << ',' << r.val_ba << '\n';
  }
}

namespace {

constexpr std::size_t kActivationBatch = 64;

Tensor gather_images(const std::vector<const Image*>& ptrs) {
  return images_to_tensor(std::span<const Image* const>(ptrs));
}

// Stacks per-batch [b, d] activations into [n, d].
Tensor pooled_rows(Network& net, const std::vector<const Image*>& images, const std::string& layer) {
  std::vector<double> rows;
  std::size_t d = 0;
  for (std::size_t s = 0; s < images.size(); s += kActivationBatch) {
    const std::size_t e = std::min(images.size(), s + kActivationBatch);
    std::vector<const Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(s),
                                    images.begin() + static_cast<std::ptrdiff_t>(e));
    const auto acts = pooled_activations(net, gather_images(chunk), {layer});
    const Tensor& a = acts.at(layer);
    d = a.dim(1);
    rows.insert(rows.end(), a.values().begin(), a.values().end());
  }
  return Tensor(Shape{images.size(), d}, std::move(rows));
}

}  // namespace

ActivationSet bank_activations(Network& net, const ConceptBank& bank, const std::string& layer) {
  if (bank.size() == 0) throw ConfigError("concept bank '" + bank.concept_name + "' is empty");
  ActivationSet set;
  set.layer = layer;
  std::vector<const Image*> ptrs;
  for (const auto& im : bank.positives) ptrs.push_back(&im);
  if (bank.continuous()) {
    set.labels = *bank.scores;
  } else {
    for (const auto& im : bank.negatives) ptrs.push_back(&im);
    set.labels.assign(bank.positives.size(), 1.0);
    set.labels.resize(ptrs.size(), 0.0);
  }
  set.acts = pooled_rows(net, ptrs, layer);
  return set;
}

std::vector<TapLcrs> recompute_lcrs(Network& net, const std::vector<ConceptBank>& banks,
                                    const std::vector<std::string>& taps, LcrKind kind,
                                    const LcrFitOptions& opts) {
  if (banks.empty()) throw ConfigError("LCR fitting needs at least one concept bank");
  validate_taps(net, taps);
  std::vector<TapLcrs> out;
  for (const auto& layer : taps) {
    TapLcrs tap{layer, {}};
    for (const auto& bank : banks) {
      if (needs_scores(kind) != bank.continuous()) {
        throw ConfigError("concept '" + bank.concept_name + "': " + to_string(kind) +
                          (needs_scores(kind) ? " needs a continuous bank" : " needs a paired bank"));
      }
      const auto set = bank_activations(net, bank, layer);
      try {
        Lcr lcr = fit_lcr(kind, set, opts);
        lcr.concept_name = bank.concept_name;
        tap.lcrs.push_back(std::move(lcr));
      } catch (const std::exception& e) {
        throw FitError("concept '" + bank.concept_name + "' at " + layer + ": " + e.what());
      }
    }
    out.push_back(std::move(tap));
  }
  return out;
}

std::vector<std::string> resolve_taps(const TrainConfig& cfg) {
  if (!cfg.taps.empty()) return cfg.taps;
  return {cfg.model.block_names().back()};
}

std::vector<std::string> resolve_concepts(const TrainConfig& cfg, const TaskSpec& task) {
  if (!cfg.concepts.empty()) return cfg.concepts;
  std::vector<std::string> out;
  for (auto s : task.targets) out.push_back(to_string(s));
  return out;
}

std::vector<ConceptBank> load_banks(const std::filesystem::path& dir, const std::vector<std::string>& names) {
  std::vector<ConceptBank> out;
  for (const auto& n : names) {
    if (!std::filesystem::exists(dir / n)) throw ConfigError("no concept bank for '" + n + "' under " + dir.string());
    out.push_back(load_bank(dir / n));
  }
  return out;
}

std::vector<int> predict(Network& net, const std::vector<Image>& images, std::size_t batch) {
  std::vector<int> out;
  out.reserve(images.size());
  auto& g = net.graph();
  const std::vector<ad::NodeId> outs{net.logits()};
  for (std::size_t s = 0; s < images.size(); s += batch) {
    const std::size_t e = std::min(images.size(), s + batch);
    std::vector<const Image*> ptrs;
    for (std::size_t i = s; i < e; ++i) ptrs.push_back(&images[i]);
    g.forward({{"images", gather_images(ptrs)}}, outs);
    const Tensor& lg = g.value(net.logits());
    for (std::size_t r = 0; r < lg.dim(0); ++r) {
      const auto row = lg.row(r);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

namespace {

std::vector<ConceptBank> match_banks(const std::vector<std::string>& names, const std::vector<ConceptBank>& banks) {
  std::vector<ConceptBank> out;
  for (const auto& n : names) {
    auto it = std::find_if(banks.begin(), banks.end(), [&](const ConceptBank& b) { return b.concept_name == n; });
    if (it == banks.end()) throw ConfigError("no concept bank for '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

// Column k of the records' concept presence for each concept name.
std::vector<std::size_t> concept_columns(const std::vector<std::string>& names, const TaskSpec& task) {
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    auto it = std::find_if(task.targets.begin(), task.targets.end(), [&](ShapeKind s) { return to_string(s) == n; });
    if (it == task.targets.end()) {
      throw ConfigError("concept '" + n + "' has no presence labels in the " + to_string(task.kind) + " manifest");
    }
    cols.push_back(static_cast<std::size_t>(it - task.targets.begin()));
  }
  return cols;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

double validation_ba(Network& net, const Dataset& data) {
  const auto& val = data.split("val");
  const auto preds = predict(net, val.images);
  std::vector<int> labels;
  for (const auto& r : val.records) labels.push_back(r.label);
  return balanced_accuracy(preds, labels, static_cast<std::size_t>(data.task.classes));
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const Dataset& data, const std::vector<ConceptBank>& banks) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const auto& train = data.split("train");
  if (train.images.empty()) throw ConfigError("training split is empty");
  if (cfg.model.num_classes != static_cast<std::size_t>(data.task.classes)) {
    throw ConfigError("model has " + std::to_string(cfg.model.num_classes) + " classes but the " +
                      to_string(data.task.kind) + " task has " + std::to_string(data.task.classes));
  }
  const auto taps = resolve_taps(cfg);
  const auto concepts = resolve_concepts(cfg, data.task);
  const std::size_t K = concepts.size();

  ModelSpec spec = cfg.model;
  std::vector<std::size_t> aux_cols;
  const bool aux = cfg.method == Method::kMultitask || cfg.method == Method::kLinearProbe;
  if (aux) {
    aux_cols = concept_columns(concepts, data.task);
    spec.aux_layer = cfg.method == Method::kMultitask ? "pool" : taps.front();
    spec.aux_concepts = K;
  }

  TrainResult result{Network::build(spec, derive_seed(cfg.seed, {hash_name("init")})), {}, {}};
  Network& net = result.net;
  validate_taps(net, taps);
  auto& g = net.graph();

  const ad::NodeId labels = g.input("labels");
  const ad::NodeId main = g.softmax_cross_entropy(net.logits(), labels);
  g.set_name(main, "main_loss");

  const bool reg_on = cfg.method == Method::kLcrReg;
  std::optional<RegularizerGraph> reg;
  std::vector<ConceptBank> used_banks;
  ad::NodeId reg_loss = 0;
  if (reg_on) {
    used_banks = match_banks(concepts, banks);
    std::vector<std::pair<std::string, ad::NodeId>> tap_nodes;
    for (const auto& t : taps) tap_nodes.emplace_back(t, net.pooled(t));
    reg.emplace(g, tap_nodes, cfg.lcr, K, cfg.loss);
    reg_loss = reg->loss();
  } else {
    reg_loss = g.constant(Tensor::scalar(0.0), "reg.none");
  }
  const CombinedLoss combo = combine_losses(g, main, reg_loss);

  ad::NodeId aux_loss = 0, aux_labels = 0;
  ad::NodeId objective_plain = combo.main_scaled, objective_reg = combo.total;
  if (aux) {
    aux_labels = g.input("concept_labels");
    const ad::NodeId flat = g.reshape(net.aux_logits(), Shape{ad::Graph::kInferExtent, 2});
    aux_loss = g.softmax_cross_entropy(flat, aux_labels);
    g.set_name(aux_loss, "aux_loss");
    objective_plain = g.add(combo.main_scaled, g.scale(aux_loss, cfg.aux_weight));
    objective_reg = objective_plain;
  }

  const auto refits = recompute_epochs(cfg.schedule, cfg.epochs, cfg.recompute_interval);
  const auto names = g.parameter_names();
  const std::set<std::string> all_params(names.begin(), names.end());
  Adam adam(cfg.optimizer);
  const std::size_t n = train.images.size();
  bool lcrs_set = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    const Weights w = schedule_weights(cfg.schedule, epoch, cfg.epochs);
    rec.alpha = reg_on ? w.alpha : 0.0;
    rec.beta = w.beta;
    if (reg_on && std::find(refits.begin(), refits.end(), epoch) != refits.end()) {
      result.lcrs = recompute_lcrs(net, used_banks, taps, cfg.lcr, cfg.lcr_options);
      reg->set_lcrs(g, result.lcrs);
      lcrs_set = true;
      rec.recompute = true;
    }
    g.set_constant(combo.alpha, Tensor::scalar(rec.alpha));
    g.set_constant(combo.beta, Tensor::scalar(rec.beta));

    const int stage = schedule_stage(cfg.schedule, epoch);
    const std::set<std::string>* trainable = &all_params;
    std::set<std::string> mask;
    if (stage == 3) {
      mask = freeze_mask(net, FreezeStage::kAboveTaps, taps);
      trainable = &mask;
    } else if (stage == 2 && cfg.stage2_freeze_above) {
      mask = freeze_mask(net, FreezeStage::kBelowAndIncludingTaps, taps);
      trainable = &mask;
    }

    const bool use_reg = reg_on && lcrs_set && rec.alpha > 0;
    const ad::NodeId objective = use_reg ? objective_reg : objective_plain;
    std::vector<ad::NodeId> outs{objective, main};
    if (reg_on && lcrs_set) outs.push_back(reg_loss);

    Rng rng = make_rng(cfg.seed, {hash_name("shuffle"), epoch});
    const auto order = shuffled(n, rng);
    double main_sum = 0.0, reg_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t s = 0; s < n; s += cfg.batch_size, ++step) {
      const std::size_t e = std::min(n, s + cfg.batch_size);
      std::vector<const Image*> ptrs;
      Tensor y(Shape{e - s});
      Tensor cy(Shape{aux ? (e - s) * K : 1});
      for (std::size_t i = s; i < e; ++i) {
        const std::size_t k = order[i];
        ptrs.push_back(&train.images[k]);
        y[i - s] = train.records[k].label;
        for (std::size_t c = 0; c < aux_cols.size(); ++c) {
          cy[(i - s) * K + c] = train.records[k].concepts.at(aux_cols[c]);
        }
      }
      ad::Feeds feeds{{"images", gather_images(ptrs)}, {"labels", y}};
      if (aux) feeds.emplace("concept_labels", cy);
      g.forward(feeds, outs);
      const double obj = g.value(objective).item();
      if (!std::isfinite(obj)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      }
      const double bs = static_cast<double>(e - s);
      main_sum += g.value(main).item() * bs;
      if (reg_on && lcrs_set) reg_sum += g.value(reg_loss).item() * bs;
      const auto grads = g.backward(objective);
      adam.step(g, grads, *trainable);
    }
    rec.main_loss = main_sum / static_cast<double>(n);
    rec.reg_loss = reg_on && lcrs_set ? reg_sum / static_cast<double>(n) : kNaN;
    const bool last = epoch + 1 == cfg.epochs;
    const bool eval_now = data.has_split("val") &&
                          (last || (cfg.eval_val_every > 0 && (epoch + 1) % cfg.eval_val_every == 0));
    rec.val_ba = eval_now ? validation_ba(net, data) : kNaN;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    result.history.epochs.push_back(rec);
  }
  result.history.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (!cfg.checkpoint.empty()) save_checkpoint(net, cfg.checkpoint);
  return result;
}

TrainResult run_training(const TrainConfig& cfg) {
  if (cfg.dataset_dir.empty()) throw ConfigError("config names no dataset");
  const Dataset data = load_dataset(cfg.dataset_dir);
  std::vector<ConceptBank> banks;
  if (cfg.method == Method::kLcrReg) {
    if (cfg.concepts_dir.empty()) throw ConfigError("config names no concepts_dir");
    banks = load_banks(cfg.concepts_dir, resolve_concepts(cfg, data.task));
  }
  return run_training(cfg, data, banks);
}

namespace {

void expand_grid(const std::vector<std::pair<std::string, nlohmann::json>>& axes, std::size_t k,
                 nlohmann::json& current, std::vector<nlohmann::json>& out) {
  if (k == axes.size()) {
    out.push_back(current);
    return;
  }
  for (const auto& v : axes[k].second) {
    current[axes[k].first] = v;
    expand_grid(axes, k + 1, current, out);
  }
}

}  // namespace

GridResult grid_search(const TrainConfig& base, const nlohmann::json& grid, const Dataset& data,
                       const std::vector<ConceptBank>& banks) {
  if (!grid.is_object() || grid.empty()) throw ConfigError("grid must map JSON pointers to value lists");
  std::vector<std::pair<std::string, nlohmann::json>> axes;
  for (const auto& [ptr, values] : grid.items()) {
    if (!values.is_array() || values.empty()) throw ConfigError("grid axis '" + ptr + "' needs a non-empty list");
    axes.emplace_back(ptr, values);
  }
  std::vector<nlohmann::json> combos;
  nlohmann::json current = nlohmann::json::object();
  expand_grid(axes, 0, current, combos);

  GridResult result;
  const nlohmann::json base_json = base;
  double best = -1.0;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    nlohmann::json j = base_json;
    for (const auto& [ptr, v] : combos[i].items()) {
      try {
        j[nlohmann::json::json_pointer(ptr)] = v;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("grid axis '" + ptr + "': " + e.what());
      }
    }
    TrainConfig cfg;
    try {
      cfg = j.get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("grid point: ") + e.what());
    }
    cfg.checkpoint.clear();
    cfg.eval_val_every = 0;
    auto run = run_training(cfg, data, banks);
    GridPoint p{combos[i], run.history.epochs.back().val_ba};
    if (p.val_ba > best) {
      best = p.val_ba;
      result.best = i;
      result.best_config = cfg;
    }
    result.points.push_back(std::move(p));
  }
  return result;
}

}  // namespace lcrreg
