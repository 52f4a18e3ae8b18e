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

#ifndef LCRREG_REGULARIZER_HPP_
#define LCRREG_REGULARIZER_HPP_

// Concept regularisation losses on pooled tap activations, as eager
// functions and as graph fragments.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lcrreg/graph.hpp"
#include "lcrreg/lcr.hpp"
#include "lcrreg/tensor.hpp"

namespace lcrreg {

struct ConceptSubspace {
  std::string layer;
  Tensor basis;  // [d, r], orthonormal columns
  std::size_t source_count = 0;

  std::size_t dim() const { return basis.dim(0); }
  std::size_t rank() const { return basis.dim(1); }
  bool rank_deficient() const { return rank() < source_count; }
};

inline constexpr double kDependenceTolerance = 1e-8;

// Modified Gram-Schmidt; vectors whose residual norm falls below
// kDependenceTolerance are dropped. Throws FitError if nothing survives.
ConceptSubspace orthonormal_basis(const std::vector<std::vector<double>>& vectors, std::string layer = {});

enum class LossVariant { kSubspaceCosine, kDecisionBoundary };
enum class DbSign { kPenalty, kLiteral };

std::string to_string(LossVariant v);
LossVariant parse_loss_variant(const std::string& s);
std::string to_string(DbSign s);
DbSign parse_db_sign(const std::string& s);

struct LossConfig {
  LossVariant variant = LossVariant::kSubspaceCosine;
  double c = 1.0;
  double eps = 1e-8;
  DbSign sign = DbSign::kPenalty;

  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// x_hat = B B^T x.
std::vector<double> project(std::span<const double> x, const ConceptSubspace& s);

// 1 - <x, x_hat> / (|x| |x_hat| + eps) for one activation.
double subspace_cosine_loss(std::span<const double> x, const ConceptSubspace& s, double eps = 1e-8);
// Mean over the rows of [N, d].
double subspace_cosine_loss(const Tensor& acts, const ConceptSubspace& s, double eps = 1e-8);

// Mean over the K decision values of exp(-|phi|/c) (penalty) or
// -|exp(-phi/c)| (literal).
double db_loss(std::span<const double> phis, const LossConfig& cfg);

// beta * main + alpha * reg.
double combine_losses(double main, double reg, double alpha, double beta);

// LCRs of every concept at one tap layer.
struct TapLcrs {
  std::string layer;
  std::vector<Lcr> lcrs;
};

// Loss graph over a set of tap activations ([N, d_l] nodes). The LCRs enter
// as constants and can be swapped without rebuilding.
class RegularizerGraph {
 public:
  RegularizerGraph(ad::Graph& g, std::vector<std::pair<std::string, ad::NodeId>> taps, LcrKind kind,
                   std::size_t concepts, LossConfig cfg);

  // Throws ConfigError if layers, kinds or concept counts disagree with the
  // construction.
  void set_lcrs(ad::Graph& g, const std::vector<TapLcrs>& lcrs);
  ad::NodeId loss() const { return loss_; }
  const LossConfig& config() const { return cfg_; }

 private:
  struct Term {
    ad::NodeId a = 0;  // basis B, direction column, or support^T
    ad::NodeId b = 0;  // B^T, bias, or squared support norms
    ad::NodeId c = 0;  // car dual column
    ad::NodeId s = 0;  // car kernel scale -1 / (2 sigma^2), broadcast
  };
  std::vector<std::pair<std::string, ad::NodeId>> taps_;
  LcrKind kind_;
  std::size_t concepts_;
  LossConfig cfg_;
  std::vector<std::vector<Term>> terms_;  // [tap][concept]; one entry per tap for the subspace form
  ad::NodeId loss_ = 0;
};

// total = beta * main + alpha * reg with alpha and beta fed as scalar inputs.
struct CombinedLoss {
  ad::NodeId alpha = 0;
  ad::NodeId beta = 0;
  ad::NodeId main_scaled = 0;  // beta * main
  ad::NodeId total = 0;
};
CombinedLoss combine_losses(ad::Graph& g, ad::NodeId main, ad::NodeId reg);

}  // namespace lcrreg

#endif  // LCRREG_REGULARIZER_HPP_
