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

#include "lcrreg/error.hpp"

namespace lcrreg {

ConceptSubspace orthonormal_basis(const std::vector<std::vector<double>>& vectors, std::string layer) {
  if (vectors.empty()) throw ContractError("orthonormal_basis needs at least one vector");
  const std::size_t d = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw ShapeError("orthonormal_basis: vectors differ in dimension");
  }
  std::vector<std::vector<double>> kept;
  for (const auto& v : vectors) {
    std::vector<double> r = v;
    for (const auto& q : kept) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += q[i] * r[i];
      for (std::size_t i = 0; i < d; ++i) r[i] -= proj * q[i];
    }
    double norm = 0.0;
    for (double x : r) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < kDependenceTolerance) continue;
    for (double& x : r) x /= norm;
    kept.push_back(std::move(r));
  }
  if (kept.empty()) throw FitError("orthonormal_basis: every vector is zero");
  ConceptSubspace s;
  s.layer = std::move(layer);
  s.source_count = vectors.size();
  s.basis = Tensor(Shape{d, kept.size()});
  for (std::size_t k = 0; k < kept.size(); ++k)
    for (std::size_t i = 0; i < d; ++i) s.basis[i * kept.size() + k] = kept[k][i];
  return s;
}

std::string to_string(LossVariant v) {
  return v == LossVariant::kSubspaceCosine ? "subspace-cosine" : "decision-boundary";
}

LossVariant parse_loss_variant(const std::string& s) {
  if (s == "subspace-cosine" || s == "cosine") return LossVariant::kSubspaceCosine;
  if (s == "decision-boundary" || s == "db") return LossVariant::kDecisionBoundary;
  throw ConfigError("unknown loss variant '" + s + "'");
}

std::string to_string(DbSign s) { return s == DbSign::kPenalty ? "penalty" : "literal"; }

DbSign parse_db_sign(const std::string& s) {
  if (s == "penalty") return DbSign::kPenalty;
  if (s == "literal") return DbSign::kLiteral;
  throw ConfigError("unknown decision-boundary sign mode '" + s + "'");
}

void LossConfig::validate() const {
  if (!(c > 0.0)) throw ConfigError("decay rate c must be positive");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"variant", to_string(c.variant)}, {"c", c.c}, {"eps", c.eps}, {"sign", to_string(c.sign)}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  if (j.contains("variant")) c.variant = parse_loss_variant(j.at("variant").get<std::string>());
  c.c = j.value("c", c.c);
  c.eps = j.value("eps", c.eps);
  if (j.contains("sign")) c.sign = parse_db_sign(j.at("sign").get<std::string>());
}

std::vector<double> project(std::span<const double> x, const ConceptSubspace& s) {
  const std::size_t d = s.dim(), r = s.rank();
  if (x.size() != d) throw ShapeError("project: activation width " + std::to_string(x.size()) + " vs subspace " + std::to_string(d));
  std::vector<double> coef(r, 0.0), out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < r; ++k) coef[k] += s.basis[i * r + k] * x[i];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < r; ++k) out[i] += s.basis[i * r + k] * coef[k];
  return out;
}

double subspace_cosine_loss(std::span<const double> x, const ConceptSubspace& s, double eps) {
  const auto xh = project(x, s);
  double dot = 0.0, nx = 0.0, nh = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * xh[i];
    nx += x[i] * x[i];
    nh += xh[i] * xh[i];
  }
  return 1.0 - dot / (std::sqrt(nx) * std::sqrt(nh) + eps);
}

double subspace_cosine_loss(const Tensor& acts, const ConceptSubspace& s, double eps) {
  if (acts.rank() != 2 || acts.dim(0) == 0) throw ShapeError("subspace_cosine_loss expects non-empty [N, d]");
  double total = 0.0;
  for (std::size_t r = 0; r < acts.dim(0); ++r) total += subspace_cosine_loss(acts.row(r), s, eps);
  return total / static_cast<double>(acts.dim(0));
}

double db_loss(std::span<const double> phis, const LossConfig& cfg) {
  cfg.validate();
  if (phis.empty()) throw ContractError("db_loss needs at least one decision function");
  double total = 0.0;
  for (double phi : phis) {
    total += cfg.sign == DbSign::kPenalty ? std::exp(-std::abs(phi) / cfg.c) : -std::abs(std::exp(-phi / cfg.c));
  }
  return total / static_cast<double>(phis.size());
}

double combine_losses(double main, double reg, double alpha, double beta) {
  if (alpha < 0 || beta < 0) throw ContractError("loss weights must be non-negative");
  return beta * main + alpha * reg;
}

RegularizerGraph::RegularizerGraph(ad::Graph& g, std::vector<std::pair<std::string, ad::NodeId>> taps,
                                   LcrKind kind, std::size_t concepts, LossConfig cfg)
    : taps_(std::move(taps)), kind_(kind), concepts_(concepts), cfg_(cfg) {
  cfg_.validate();
  if (taps_.empty()) throw ConfigError("regularisation needs at least one tap layer");
  if (concepts_ == 0) throw ConfigError("regularisation needs at least one concept");
  const bool cosine = cfg_.variant == LossVariant::kSubspaceCosine;
  if (cosine && !has_direction(kind_)) {
    throw ConfigError(to_string(kind_) + " has no direction; use the decision-boundary loss");
  }
  // Placeholders; set_lcrs supplies the values.
  auto placeholder = [&](const std::string& name) { return g.constant(Tensor(Shape{1, 1}, 0.0), name); };
  std::vector<ad::NodeId> per_tap;
  for (std::size_t t = 0; t < taps_.size(); ++t) {
    const auto& [layer, x] = taps_[t];
    const std::string prefix = "reg." + layer;
    std::vector<Term> terms;
    if (cosine) {
      Term term;
      term.a = placeholder(prefix + ".basis");
      term.b = placeholder(prefix + ".basis_t");
      const ad::NodeId proj = g.matmul(g.matmul(x, term.a), term.b);
      const ad::NodeId num = g.dot(x, proj);
      const ad::NodeId den = g.add_scalar(g.mul(g.l2norm(x), g.l2norm(proj)), cfg_.eps);
      per_tap.push_back(g.add_scalar(g.scale(g.mean(g.div(num, den)), -1.0), 1.0));
      terms.push_back(term);
    } else {
      ad::NodeId sq = 0;
      if (kind_ == LcrKind::kCar) {
        // Row norms via a ones column sized in set_lcrs.
        const ad::NodeId ones = placeholder(prefix + ".ones");
        sq = g.matmul(g.mul(x, x), ones);
      }
      ad::NodeId acc = 0;
      for (std::size_t k = 0; k < concepts_; ++k) {
        const std::string cp = prefix + ".c" + std::to_string(k);
        Term term;
        ad::NodeId phi;
        if (kind_ == LcrKind::kCar) {
          term.a = placeholder(cp + ".support_t");
          term.b = placeholder(cp + ".support_sq");
          term.c = placeholder(cp + ".dual");
          term.s = placeholder(cp + ".kscale");
          const ad::NodeId d2 = g.add(g.sub(sq, g.scale(g.matmul(x, term.a), 2.0)), term.b);
          phi = g.matmul(g.exp(g.mul(d2, term.s)), term.c);
        } else {
          term.a = placeholder(cp + ".direction");
          term.b = placeholder(cp + ".bias");
          phi = g.add(g.matmul(x, term.a), term.b);
        }
        ad::NodeId t_loss;
        if (cfg_.sign == DbSign::kPenalty) {
          t_loss = g.mean(g.exp(g.scale(g.abs(phi), -1.0 / cfg_.c)));
        } else {
          t_loss = g.scale(g.mean(g.abs(g.exp(g.scale(phi, -1.0 / cfg_.c)))), -1.0);
        }
        acc = k == 0 ? t_loss : g.add(acc, t_loss);
        terms.push_back(term);
      }
      per_tap.push_back(g.scale(acc, 1.0 / static_cast<double>(concepts_)));
    }
    terms_.push_back(std::move(terms));
  }
  ad::NodeId total = per_tap[0];
  for (std::size_t t = 1; t < per_tap.size(); ++t) total = g.add(total, per_tap[t]);
  loss_ = g.scale(total, 1.0 / static_cast<double>(taps_.size()));
  g.set_name(loss_, "reg.loss");
}

void RegularizerGraph::set_lcrs(ad::Graph& g, const std::vector<TapLcrs>& lcrs) {
  if (lcrs.size() != taps_.size()) {
    throw ConfigError("expected LCRs for " + std::to_string(taps_.size()) + " tap(s), got " + std::to_string(lcrs.size()));
  }
  for (std::size_t t = 0; t < taps_.size(); ++t) {
    const auto& [layer, x] = taps_[t];
    const auto& tl = lcrs[t];
    if (tl.layer != layer) throw ConfigError("LCRs for layer '" + tl.layer + "' supplied for tap '" + layer + "'");
    if (tl.lcrs.size() != concepts_) {
      throw ConfigError("tap " + layer + ": expected " + std::to_string(concepts_) + " concept(s), got " +
                        std::to_string(tl.lcrs.size()));
    }
    const std::size_t d = tl.lcrs.front().dim;
    for (const auto& l : tl.lcrs) {
      if (l.kind != kind_) throw ConfigError("tap " + layer + ": LCR kind " + to_string(l.kind) + " but regulariser built for " + to_string(kind_));
      if (l.dim != d) throw ConfigError("tap " + layer + ": LCRs disagree on the activation width");
    }
    if (cfg_.variant == LossVariant::kSubspaceCosine) {
      std::vector<std::vector<double>> dirs;
      for (const auto& l : tl.lcrs) dirs.push_back(l.direction);
      const ConceptSubspace s = orthonormal_basis(dirs, layer);
      const std::size_t r = s.rank();
      Tensor bt(Shape{r, d});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < r; ++k) bt[k * d + i] = s.basis[i * r + k];
      g.set_constant(terms_[t][0].a, s.basis);
      g.set_constant(terms_[t][0].b, bt);
      continue;
    }
    if (kind_ == LcrKind::kCar) g.set_constant(g.find("reg." + layer + ".ones"), Tensor(Shape{d, 1}, 1.0));
    for (std::size_t k = 0; k < concepts_; ++k) {
      const Lcr& l = tl.lcrs[k];
      const Term& term = terms_[t][k];
      if (kind_ == LcrKind::kCar) {
        const std::size_t m = l.dual.size();
        Tensor st(Shape{d, m}), sn(Shape{1, m}, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
          const auto row = l.support.row(j);
          for (std::size_t i = 0; i < d; ++i) {
            st[i * m + j] = row[i];
            sn[j] += row[i] * row[i];
          }
        }
        g.set_constant(term.a, std::move(st));
        g.set_constant(term.b, std::move(sn));
        g.set_constant(term.c, Tensor(Shape{m, 1}, l.dual));
        g.set_constant(term.s, Tensor(Shape{1}, -1.0 / (2.0 * l.bandwidth * l.bandwidth)));
      } else {
        g.set_constant(term.a, Tensor(Shape{d, 1}, l.direction));
        g.set_constant(term.b, Tensor(Shape{1}, l.bias));
      }
    }
  }
}

CombinedLoss combine_losses(ad::Graph& g, ad::NodeId main, ad::NodeId reg) {
  CombinedLoss c;
  c.alpha = g.constant(Tensor::scalar(0.0), "alpha");
  c.beta = g.constant(Tensor::scalar(1.0), "beta");
  c.main_scaled = g.mul(c.beta, main);
  c.total = g.add(c.main_scaled, g.mul(c.alpha, reg));
  g.set_name(c.total, "total_loss");
  return c;
}

}  // namespace lcrreg
