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

#include "lcrreg/concept_bank.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "gtest/gtest.h"
#include "lcrreg/error.hpp"

namespace lcrreg {
namespace {

std::vector<HealthyImage> plain_backgrounds(std::size_t n) {
  std::vector<HealthyImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(64, 64, kBackground);
    img.set(i % 64, 0, {1, 2, static_cast<std::uint8_t>(i)});  // keep them distinct
    out.push_back({"bg-" + std::to_string(i), img});
  }
  return out;
}

ConceptSource square_source(std::size_t x0, std::size_t y0, std::size_t side, Rgb colour) {
  ConceptSource s;
  s.id = "sq";
  s.image = Image(64, 64, kBackground);
  s.mask = {64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) {
      s.image.set(x, y, colour);
      s.mask.bits[y * 64 + x] = 1;
    }
  }
  return s;
}

std::vector<std::size_t> differing(const Image& a, const Image& b) {
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < a.height(); ++y)
    for (std::size_t x = 0; x < a.width(); ++x)
      if (!(a.at(x, y) == b.at(x, y))) out.push_back(y * a.width() + x);
  return out;
}

bool in_rects(std::size_t pixel, const PairProvenance& p) {
  const std::size_t x = pixel % 64, y = pixel / 64;
  return std::any_of(p.pastes.begin(), p.pastes.end(), [&](const Paste& q) {
    return x >= q.to.x && x < q.to.x + q.to.w && y >= q.to.y && y < q.to.y + q.to.h;
  });
}

TEST(SynthesizePair, SinglePasteChangesExactlyTheRect) {
  const auto bgs = plain_backgrounds(3);
  const auto src = square_source(10, 20, 8, {200, 10, 10});
  Rng rng(1);
  const ConceptPair pair = synthesize_pair(0, bgs, {src}, 1, rng);
  ASSERT_EQ(pair.provenance.pastes.size(), 1u);
  const Rect to = pair.provenance.pastes[0].to;
  EXPECT_EQ(pair.provenance.pastes[0].from, (Rect{10, 20, 8, 8}));
  std::vector<std::size_t> expected;
  for (std::size_t y = to.y; y < to.y + 8; ++y)
    for (std::size_t x = to.x; x < to.x + 8; ++x) expected.push_back(y * 64 + x);
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(differing(pair.positive, bgs[0].image), expected);
  EXPECT_EQ(pair.provenance.background_id, "bg-0");
  EXPECT_NE(pair.provenance.pastes[0].healthy_id, "bg-0");
}

TEST(SynthesizePair, DifferencesConfinedToPasteRects) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 40, 3, TexturePolicy::kMixed);
  const auto srcs = make_sources(ShapeKind::kSquare, 20, 3, TexturePolicy::kMixed);
  for (std::size_t b = 0; b < 20; ++b) {
    Rng rng(b);
    const ConceptPair pair = synthesize_pair(b, bgs, srcs, 5, rng);
    for (auto px : differing(pair.negative, bgs[b].image)) EXPECT_TRUE(in_rects(px, pair.provenance));
    for (auto px : differing(pair.positive, pair.negative)) EXPECT_TRUE(in_rects(px, pair.provenance));
    for (auto px : differing(pair.positive, bgs[b].image)) EXPECT_TRUE(in_rects(px, pair.provenance));
    for (const auto& p : pair.provenance.pastes) EXPECT_NE(p.healthy_id, bgs[b].id);
  }
}

TEST(SynthesizePair, Preconditions) {
  const auto bgs = plain_backgrounds(3);
  const auto src = square_source(0, 0, 8, {200, 10, 10});
  Rng rng(1);
  EXPECT_THROW(synthesize_pair(0, bgs, {src}, 0, rng), ContractError);
  EXPECT_THROW(synthesize_pair(0, {bgs[0]}, {src}, 1, rng), ConfigError);
  EXPECT_THROW(synthesize_pair(0, bgs, {}, 1, rng), ConfigError);
}

TEST(SynthesizePair, ImpossiblePlacementIsReported) {
  // Four 40x40 patches cannot fit on a 64x64 canvas without overlap.
  const auto bgs = plain_backgrounds(3);
  ConceptSource big = square_source(0, 0, 40, {1, 200, 1});
  big.id = "big";
  Rng rng(1);
  try {
    synthesize_pair(0, bgs, {big}, 4, rng);
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_NE(std::string(e.what()).find("big"), std::string::npos);
  }
}

TEST(ContinuousScore, RatioOfConceptPixels) {
  const auto bgs = plain_backgrounds(3);
  const auto src = square_source(4, 4, 8, {9, 99, 199});
  Rng rng(5);
  const ConceptPair pair = synthesize_pair(1, bgs, {src}, 1, rng);
  EXPECT_EQ(continuous_score(pair.positive, pair.provenance), 64.0 / 4096.0);
  EXPECT_EQ(continuous_score(pair.positive, PairProvenance{}), 0.0);
}

TEST(ContinuousScore, MonotoneInPasteCount) {
  const auto bgs = plain_backgrounds(4);
  const auto src = square_source(4, 4, 8, {9, 99, 199});
  double prev = 0.0;
  for (int n = 1; n <= 8; ++n) {
    Rng rng(static_cast<std::uint64_t>(n));
    const ConceptPair pair = synthesize_pair(0, bgs, {src}, n, rng);
    const double s = continuous_score(pair.positive, pair.provenance);
    EXPECT_EQ(s, n * 64.0 / 4096.0);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(ContinuousBank, MeanScoreNondecreasingInN) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 64, 4, TexturePolicy::kSolid);
  const auto srcs = make_sources(ShapeKind::kSquare, 32, 4, TexturePolicy::kSolid);
  double prev = 0.0;
  for (int n = 1; n <= 6; ++n) {
    const ConceptBank bank = build_bank("square", bgs, srcs, 64, n, 9);
    double mean = 0.0;
    for (std::size_t i = 0; i < bank.size(); ++i) mean += continuous_score(bank.positives[i], bank.provenance[i]);
    mean /= static_cast<double>(bank.size());
    EXPECT_GE(mean, prev) << n;
    prev = mean;
  }
}

TEST(ContinuousBank, ScoresInUnitInterval) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 50, 4, TexturePolicy::kSolid);
  const auto srcs = make_sources(ShapeKind::kSquare, 16, 4, TexturePolicy::kSolid);
  const ConceptBank bank = build_continuous_bank("square", bgs, srcs, 50, 8, 2);
  ASSERT_TRUE(bank.continuous());
  EXPECT_TRUE(bank.negatives.empty());
  for (double s : *bank.scores) {
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(BuildBank, FullSizeBank) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 128, 1, TexturePolicy::kMixed);
  const auto srcs = make_sources(ShapeKind::kSquare, 64, 1, TexturePolicy::kMixed);
  const ConceptBank bank = build_bank("square", bgs, srcs, 128, 5, 1);
  EXPECT_EQ(bank.positives.size(), 128u);
  EXPECT_EQ(bank.negatives.size(), 128u);
  for (const auto& p : bank.provenance) EXPECT_EQ(p.pastes.size(), 5u);
}

TEST(BuildBank, Deterministic) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 20, 1, TexturePolicy::kMixed);
  const auto srcs = make_sources(ShapeKind::kSquare, 10, 1, TexturePolicy::kMixed);
  const ConceptBank a = build_bank("square", bgs, srcs, 20, 3, 7);
  const ConceptBank b = build_bank("square", bgs, srcs, 20, 3, 7);
  const ConceptBank c = build_bank("square", bgs, srcs, 20, 3, 8);
  EXPECT_EQ(a.positives, b.positives);
  EXPECT_EQ(a.negatives, b.negatives);
  EXPECT_NE(a.positives, c.positives);
}

TEST(BuildBank, DisjointSourcesGiveDisjointProvenance) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 64, 1, TexturePolicy::kMixed);
  const auto train_src = make_sources(ShapeKind::kSquare, 30, 1, TexturePolicy::kMixed, 0);
  const auto held_src = make_sources(ShapeKind::kSquare, 30, 1, TexturePolicy::kMixed, 30);
  const auto a = build_bank("square", bgs, train_src, 64, 5, 1).source_ids();
  const auto b = build_bank("square", bgs, held_src, 64, 5, 2).source_ids();
  std::vector<std::string> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
  EXPECT_TRUE(shared.empty());
  EXPECT_FALSE(a.empty());
}

TEST(BuildBank, ShortfallIsNamed) {
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 10, 1, TexturePolicy::kMixed);
  const auto srcs = make_sources(ShapeKind::kSquare, 10, 1, TexturePolicy::kMixed);
  try {
    build_bank("square", bgs, srcs, 12, 5, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2 background"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_bank("square", bgs, srcs, 1, 5, 1), ConfigError);
}

TEST(Materials, BackgroundsAreConceptFreeAndSourcesValid) {
  const auto srcs = make_sources(ShapeKind::kTriangle, 30, 2, TexturePolicy::kMixed);
  for (const auto& s : srcs) EXPECT_NO_THROW(s.validate());
  ConceptSource bad = srcs[0];
  bad.mask.bits.assign(bad.mask.bits.size(), 0);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.mask.bits.assign(bad.mask.bits.size(), 1);
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(BankIo, RoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "lcrreg_bank_io";
  std::filesystem::remove_all(root);
  const auto bgs = make_backgrounds(ShapeKind::kSquare, 12, 1, TexturePolicy::kMixed);
  const auto srcs = make_sources(ShapeKind::kSquare, 6, 1, TexturePolicy::kMixed);
  const ConceptBank bank = build_bank("square", bgs, srcs, 12, 3, 1);
  const ConceptBank cont = build_continuous_bank("square_score", bgs, srcs, 12, 4, 1);
  write_bank(bank, root);
  write_bank(cont, root);
  const ConceptBank back = load_bank(root / "square");
  EXPECT_EQ(back.positives, bank.positives);
  EXPECT_EQ(back.negatives, bank.negatives);
  EXPECT_EQ(back.source_ids(), bank.source_ids());
  EXPECT_FALSE(back.continuous());
  const ConceptBank cback = load_bank(root / "square_score");
  ASSERT_TRUE(cback.continuous());
  EXPECT_EQ(*cback.scores, *cont.scores);
  std::filesystem::remove_all(root);
}

}  // namespace
}  // namespace lcrreg
