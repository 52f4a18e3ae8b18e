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

#ifndef LCRREG_PCBM_HPP_
#define LCRREG_PCBM_HPP_

// Post-hoc concept bottleneck with a residual head. Concept scores are the
// filter-CAV decision values on the final pooled features; a linear head on
// the scores is fitted first and a second linear head on the raw features is
// fitted to what the first one leaves unexplained.

#include <filesystem>
#include <string>
#include <vector>

#include "lcrreg/concept_bank.hpp"
#include "lcrreg/lcr.hpp"
#include "lcrreg/network.hpp"
#include "lcrreg/tensor.hpp"

namespace lcrreg {

struct PcbmOptions {
  double ridge = 1e-3;
  LcrFitOptions cav;
};

struct PcbmHead {
  std::string layer;
  std::size_t classes = 0;
  std::vector<Lcr> cavs;
  Tensor concept_weights;   // [K+1, C], last row is the bias
  Tensor residual_weights;  // [D+1, C], last row is the bias

  // [N,K] concept scores for [N,D] features.
  Tensor scores(const Tensor& features) const;
  // [N,C] logits; the residual head is skipped when `residual` is false.
  Tensor logits(const Tensor& features, bool residual = true) const;
};

// Warns (does not fail) when there are fewer concepts than classes - 1.
PcbmHead fit_pcbm_h(Network& net, const std::vector<ConceptBank>& banks, const std::vector<Image>& images,
                    const std::vector<int>& labels, std::size_t classes, const PcbmOptions& opts = {});

Tensor final_features(Network& net, const std::vector<Image>& images);
std::vector<int> pcbm_predict(const PcbmHead& head, const Tensor& features, bool residual = true);

void save_pcbm(const PcbmHead& head, const std::filesystem::path& path);
PcbmHead load_pcbm(const std::filesystem::path& path);

}  // namespace lcrreg

#endif  // LCRREG_PCBM_HPP_
