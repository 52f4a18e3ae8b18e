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

#include "lcrreg/regularizer.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "lcrreg/error.hpp"
#include "support/oracle_sets.hpp"

namespace lcrreg {
namespace {

using oracle::clustered;
using oracle::gaussian;

TEST(OrthonormalBasis, AxisAligned) {
  const auto s = orthonormal_basis({{1, 0}, {0, 2}});
  EXPECT_EQ(s.basis.values(), (std::vector<double>{1, 0, 0, 1}));
  EXPECT_FALSE(s.rank_deficient());
}

TEST(OrthonormalBasis, DependentVectorDropped) {
  const auto s = orthonormal_basis({{1, 0}, {2, 0}});
  EXPECT_EQ(s.rank(), 1u);
  EXPECT_EQ(s.source_count, 2u);
  EXPECT_TRUE(s.rank_deficient());
}

TEST(OrthonormalBasis, RandomVectorsAreOrthonormal) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = orthonormal_basis({gaussian(8, rng), gaussian(8, rng), gaussian(8, rng)});
    ASSERT_EQ(s.rank(), 3u);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        double dot = 0;
        for (std::size_t i = 0; i < 8; ++i) dot += s.basis[i * 3 + a] * s.basis[i * 3 + b];
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
      }
    }
  }
}

TEST(OrthonormalBasis, Degenerate) {
  EXPECT_THROW(orthonormal_basis({{0, 0}, {0, 0}}), FitError);
  EXPECT_THROW(orthonormal_basis({{1, 0}, {1, 0, 0}}), ShapeError);
}

TEST(SubspaceCosine, ClosedFormCases) {
  const auto s = orthonormal_basis({{1, 0, 0}});
  // eps shifts the loss by about eps / |x|^2, so keep |x|^2 >= 10.
  EXPECT_NEAR(subspace_cosine_loss(std::vector<double>{4, 0, 0}, s), 0.0, 1e-9);
  EXPECT_NEAR(subspace_cosine_loss(std::vector<double>{1e-3, 0, 0}, s, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(subspace_cosine_loss(std::vector<double>{0, 2, 1}, s), 1.0, 1e-7);
  EXPECT_NEAR(subspace_cosine_loss(std::vector<double>{1, 1, 0}, s), 1.0 - std::cos(M_PI / 4), 1e-8);
  EXPECT_NEAR(subspace_cosine_loss(std::vector<double>{1, 1, 0}, s), 0.29289, 1e-5);
}

// Invariances are checked for |x| >= 4: below that the eps term alone moves
// the loss by more than 1e-9.
TEST(SubspaceCosine, BoundsIdempotenceAndScaleInvariance) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(2, 12), k(1, 4);
  std::uniform_real_distribution<double> alpha(1e-3, 1e3), length(4.0, 400.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t d = dim(rng);
    std::vector<std::vector<double>> vs;
    for (std::size_t i = 0, n = std::min(k(rng), d); i < n; ++i) vs.push_back(gaussian(d, rng));
    const auto s = orthonormal_basis(vs);
    auto x = gaussian(d, rng);
    double xn = 0;
    for (double v : x) xn += v * v;
    const double len = length(rng);
    for (double& v : x) v *= len / std::sqrt(xn);
    const double l = subspace_cosine_loss(x, s);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    const auto p = project(x, s);
    const auto pp = project(p, s);
    for (std::size_t i = 0; i < d; ++i) ASSERT_NEAR(pp[i], p[i], 1e-9);
    std::vector<double> ax(x);
    const double a = std::max(alpha(rng), 4.0 / len);
    for (double& v : ax) v *= a;
    ASSERT_NEAR(subspace_cosine_loss(ax, s), l, 1e-9);
  }
}

TEST(DbLoss, ClosedForms) {
  LossConfig cfg;
  cfg.variant = LossVariant::kDecisionBoundary;
  EXPECT_EQ(db_loss(std::vector<double>{0.0}, cfg), 1.0);
  EXPECT_NEAR(db_loss(std::vector<double>{cfg.c}, cfg), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(db_loss(std::vector<double>{-cfg.c}, cfg), 0.36788, 1e-5);
  EXPECT_LT(db_loss(std::vector<double>{1e3}, cfg), 1e-300);
  EXPECT_LT(db_loss(std::vector<double>{-1e3}, cfg), 1e-300);
  EXPECT_NEAR(db_loss(std::vector<double>{0.0, 1.0}, cfg), 0.5 * (1 + std::exp(-1.0)), 1e-15);
  cfg.c = 2.0;
  EXPECT_NEAR(db_loss(std::vector<double>{2.0}, cfg), std::exp(-1.0), 1e-12);
}

TEST(DbLoss, PenaltyStrictlyDecreasingInDistance) {
  LossConfig cfg;
  double prev = 2.0;
  for (double phi = 0.0; phi < 30.0; phi += 0.25) {
    const double l = db_loss(std::vector<double>{phi}, cfg);
    EXPECT_LT(l, prev);
    EXPECT_EQ(l, db_loss(std::vector<double>{-phi}, cfg));
    prev = l;
  }
}

TEST(DbLoss, LiteralMode) {
  LossConfig cfg;
  cfg.sign = DbSign::kLiteral;
  EXPECT_EQ(db_loss(std::vector<double>{0.0}, cfg), -1.0);
  EXPECT_NEAR(db_loss(std::vector<double>{-1.0}, cfg), -std::exp(1.0), 1e-12);
}

TEST(DbLoss, NonPositiveDecayRejected) {
  LossConfig cfg;
  cfg.c = 0.0;
  EXPECT_THROW(db_loss(std::vector<double>{1.0}, cfg), ConfigError);
  cfg.c = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(CombineLosses, Arithmetic) {
  EXPECT_EQ(combine_losses(0.5, 0.3, 0.0, 1.0), 0.5);
  EXPECT_EQ(combine_losses(0.5, 0.3, 0.0, 0.7), 0.7 * 0.5);
  EXPECT_EQ(combine_losses(0.5, 0.3, 1.0, 0.0), 0.3);
  EXPECT_DOUBLE_EQ(combine_losses(0.5, 0.3, 100.0, 1.0), 30.5);
  EXPECT_THROW(combine_losses(0.5, 0.3, -1.0, 1.0), ContractError);
}

struct GraphCase {
  LcrKind kind;
  LossVariant variant;
  DbSign sign = DbSign::kPenalty;
};

class RegGraph : public ::testing::TestWithParam<GraphCase> {};

// Activations as a parameter so finite differences probe the loss directly.
TEST_P(RegGraph, MatchesEagerAndFiniteDifferences) {
  const auto [kind, variant, sign] = GetParam();
  std::mt19937_64 rng(static_cast<std::uint64_t>(kind) * 10 + static_cast<std::uint64_t>(variant));
  const std::size_t d = 5, n = 6, concepts = 2;
  std::vector<TapLcrs> tap_lcrs;
  for (const std::string layer : {"block1", "block2"}) {
    TapLcrs tl{layer, {}};
    for (std::size_t k = 0; k < concepts; ++k) {
      ActivationSet set = clustered(24, d, rng, layer);
      if (kind == LcrKind::kRcv) {
        for (std::size_t r = 0; r < set.rows(); ++r) set.labels[r] = set.acts.row(r)[0] + 0.1 * set.acts.row(r)[1];
      }
      tl.lcrs.push_back(fit_lcr(kind, set));
    }
    tap_lcrs.push_back(std::move(tl));
  }
  ad::Graph g;
  std::vector<std::pair<std::string, ad::NodeId>> taps;
  std::vector<Tensor> values;
  for (const std::string layer : {"block1", "block2"}) {
    Tensor v(Shape{n, d});
    for (double& x : v.data()) x = std::normal_distribution<double>()(rng) * 0.5 + 0.3;
    values.push_back(v);
    taps.push_back({layer, g.parameter(layer + ".acts", v)});
  }
  LossConfig cfg;
  cfg.variant = variant;
  cfg.sign = sign;
  RegularizerGraph reg(g, taps, kind, concepts, cfg);
  reg.set_lcrs(g, tap_lcrs);
  g.forward({});
  const double value = g.value(reg.loss()).item();

  double eager = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    if (variant == LossVariant::kSubspaceCosine) {
      std::vector<std::vector<double>> dirs;
      for (const auto& l : tap_lcrs[t].lcrs) dirs.push_back(l.direction);
      eager += subspace_cosine_loss(values[t], orthonormal_basis(dirs), cfg.eps) / 2.0;
    } else {
      double tap = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> phis;
        for (const auto& l : tap_lcrs[t].lcrs) phis.push_back(l.phi(values[t].row(r)));
        tap += db_loss(phis, cfg);
      }
      eager += tap / static_cast<double>(n) / 2.0;
    }
  }
  EXPECT_NEAR(value, eager, 1e-12 * std::max(1.0, std::abs(eager)));
  for (const std::string layer : {"block1", "block2"}) {
    EXPECT_LT(ad::finite_diff_check(g, {}, reg.loss(), layer + ".acts", 1e-6), 1e-4) << layer;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Regularizer, RegGraph,
    ::testing::Values(GraphCase{LcrKind::kFilterCav, LossVariant::kSubspaceCosine},
                      GraphCase{LcrKind::kPatternCav, LossVariant::kSubspaceCosine},
                      GraphCase{LcrKind::kRcv, LossVariant::kSubspaceCosine},
                      GraphCase{LcrKind::kFilterCav, LossVariant::kDecisionBoundary},
                      GraphCase{LcrKind::kCar, LossVariant::kDecisionBoundary},
                      GraphCase{LcrKind::kPatternCav, LossVariant::kDecisionBoundary},
                      GraphCase{LcrKind::kFilterCav, LossVariant::kDecisionBoundary, DbSign::kLiteral}));

TEST(RegGraphConfig, MismatchesRejected) {
  ad::Graph g;
  const ad::NodeId x = g.input("x");
  LossConfig cfg;
  EXPECT_THROW(RegularizerGraph(g, {{"block1", x}}, LcrKind::kCar, 1, cfg), ConfigError);
  EXPECT_THROW(RegularizerGraph(g, {}, LcrKind::kFilterCav, 1, cfg), ConfigError);
  RegularizerGraph reg(g, {{"block1", x}}, LcrKind::kPatternCav, 1, cfg);
  std::mt19937_64 rng(3);
  const Lcr l = fit_pattern_cav(clustered(10, 3, rng, "block1"));
  EXPECT_THROW(reg.set_lcrs(g, {{"block2", {l}}}), ConfigError);
  EXPECT_THROW(reg.set_lcrs(g, {{"block1", {l, l}}}), ConfigError);
  EXPECT_NO_THROW(reg.set_lcrs(g, {{"block1", {l}}}));
}

TEST(CombinedGraph, WeightsAreFedAsConstants) {
  ad::Graph g;
  const ad::NodeId main = g.parameter("m", Tensor::scalar(0.5));
  const ad::NodeId reg = g.parameter("r", Tensor::scalar(0.3));
  const CombinedLoss c = combine_losses(g, main, reg);
  g.set_constant(c.alpha, Tensor::scalar(100.0));
  g.forward({});
  EXPECT_DOUBLE_EQ(g.value(c.total).item(), 30.5);
  const auto grads = g.backward(c.total);
  EXPECT_EQ(grads.at("m").item(), 1.0);
  EXPECT_EQ(grads.at("r").item(), 100.0);
  g.set_constant(c.alpha, Tensor::scalar(0.0));
  g.forward({});
  EXPECT_EQ(g.value(c.total).item(), 0.5);
}

}  // namespace
}  // namespace lcrreg
