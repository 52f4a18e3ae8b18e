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

#include "lcrreg/pcbm.hpp"

#include <filesystem>

#include "gtest/gtest.h"
#include "lcrreg/error.hpp"
#include "lcrreg/trainer.hpp"

namespace lcrreg {
namespace {

struct Trained {
  Dataset data;
  std::vector<ConceptBank> banks;
  Network net;
};

Trained& trained() {
  static Trained t = [] {
    SpuriousSpec sp;
    sp.mode = SpuriousMode::kTrainCorrelated;
    sp.p_sc = 0.5;
    Dataset d = generate_dataset(TaskSpec::make(TaskKind::kMulticlassMultiConcept), sp, {40, 8, 8}, 12);
    std::vector<ConceptBank> banks;
    for (auto s : {ShapeKind::kSquare, ShapeKind::kTriangle, ShapeKind::kCircle}) {
      banks.push_back(make_elements_bank(s, 24, 3, 12, TexturePolicy::kMixed));
    }
    TrainConfig cfg;
    cfg.model.channels = {6, 12};
    cfg.model.num_classes = 4;
    cfg.method = Method::kVanilla;
    cfg.epochs = 4;
    cfg.batch_size = 10;
    cfg.eval_val_every = 0;
    auto r = run_training(cfg, d, {});
    return Trained{std::move(d), std::move(banks), std::move(r.net)};
  }();
  return t;
}

std::vector<int> train_labels(const Dataset& d) {
  std::vector<int> y;
  for (const auto& r : d.split("train").records) y.push_back(r.label);
  return y;
}

double accuracy(const std::vector<int>& p, const std::vector<int>& y) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hits += p[i] == y[i];
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

PcbmOptions quick() {
  PcbmOptions o;
  o.cav.hinge_iterations = 500;
  return o;
}

TEST(Pcbm, ZeroResidualHeadIsPlainPcbm) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  auto head = fit_pcbm_h(t.net, t.banks, train.images, train_labels(t.data), 4, quick());
  const Tensor f = final_features(t.net, train.images);
  const auto plain = head.logits(f, false);
  head.residual_weights.fill(0.0);
  EXPECT_EQ(head.logits(f, true), plain);
  EXPECT_EQ(pcbm_predict(head, f, true), pcbm_predict(head, f, false));
}

TEST(Pcbm, ResidualFitDoesNotLoseTrainAccuracy) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  const auto y = train_labels(t.data);
  const Tensor f = final_features(t.net, train.images);
  const auto head = fit_pcbm_h(t.net, t.banks, train.images, y, 4, quick());
  EXPECT_GE(accuracy(pcbm_predict(head, f, true), y), accuracy(pcbm_predict(head, f, false), y));
}

TEST(Pcbm, BankPositivesScoreHigher) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  const auto head = fit_pcbm_h(t.net, t.banks, train.images, train_labels(t.data), 4, quick());
  for (std::size_t k = 0; k < t.banks.size(); ++k) {
    const auto pos = head.cavs[k].phi_rows(final_features(t.net, t.banks[k].positives));
    const auto neg = head.cavs[k].phi_rows(final_features(t.net, t.banks[k].negatives));
    double mp = 0, mn = 0;
    for (double v : pos) mp += v / static_cast<double>(pos.size());
    for (double v : neg) mn += v / static_cast<double>(neg.size());
    EXPECT_GT(mp, mn) << t.banks[k].concept_name;
  }
}

TEST(Pcbm, FewConceptsWarns) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  testing::internal::CaptureStderr();
  const std::vector<ConceptBank> one{t.banks[0]};
  const auto head = fit_pcbm_h(t.net, one, train.images, train_labels(t.data), 4, quick());
  EXPECT_NE(testing::internal::GetCapturedStderr().find("warning"), std::string::npos);
  EXPECT_EQ(head.concept_weights.dim(0), 2u);
}

TEST(Pcbm, SaveLoadRoundTrip) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  const auto head = fit_pcbm_h(t.net, t.banks, train.images, train_labels(t.data), 4, quick());
  const auto path = std::filesystem::temp_directory_path() / "lcrreg_pcbm_test.json";
  save_pcbm(head, path);
  const auto back = load_pcbm(path);
  const Tensor f = final_features(t.net, train.images);
  EXPECT_EQ(back.logits(f), head.logits(f));
  EXPECT_EQ(back.layer, head.layer);
}

TEST(Pcbm, Preconditions) {
  auto& t = trained();
  const auto& train = t.data.split("train");
  EXPECT_THROW(fit_pcbm_h(t.net, {}, train.images, train_labels(t.data), 4), ConfigError);
  EXPECT_THROW(fit_pcbm_h(t.net, t.banks, train.images, {0, 1}, 4), ContractError);
}

}  // namespace
}  // namespace lcrreg
