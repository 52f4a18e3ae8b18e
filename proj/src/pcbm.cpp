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

#include <Eigen/Dense>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "lcrreg/error.hpp"
#include "lcrreg/image.hpp"
#include "lcrreg/trainer.hpp"

namespace lcrreg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix to_matrix(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

Tensor to_tensor(const RowMatrix& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMatrix>(t.raw(), m.rows(), m.cols()) = m;
  return t;
}

RowMatrix with_bias(const RowMatrix& x) {
  RowMatrix a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  return a;
}

// argmin |A W - Y|^2 + ridge |W|^2
RowMatrix ridge_fit(const RowMatrix& a, const RowMatrix& y, double ridge) {
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += ridge;
  return gram.ldlt().solve(a.transpose() * y);
}

}  // namespace

Tensor PcbmHead::scores(const Tensor& features) const {
  Tensor s(Shape{features.dim(0), cavs.size()});
  for (std::size_t k = 0; k < cavs.size(); ++k) {
    const auto phi = cavs[k].phi_rows(features);
    for (std::size_t r = 0; r < phi.size(); ++r) s[r * cavs.size() + k] = phi[r];
  }
  return s;
}

Tensor PcbmHead::logits(const Tensor& features, bool residual) const {
  RowMatrix out = with_bias(to_matrix(scores(features))) * to_matrix(concept_weights);
  if (residual) out += with_bias(to_matrix(features)) * to_matrix(residual_weights);
  return to_tensor(out);
}

Tensor final_features(Network& net, const std::vector<Image>& images) {
  const std::string layer = net.spec().block_names().back();
  std::vector<double> rows;
  std::size_t d = 0;
  for (std::size_t s = 0; s < images.size(); s += 100) {
    const std::size_t e = std::min(images.size(), s + 100);
    const auto acts = pooled_activations(net, images_to_tensor(std::span<const Image>(images.data() + s, e - s)), {layer});
    const Tensor& a = acts.at(layer);
    d = a.dim(1);
    rows.insert(rows.end(), a.values().begin(), a.values().end());
  }
  return Tensor(Shape{images.size(), d}, std::move(rows));
}

PcbmHead fit_pcbm_h(Network& net, const std::vector<ConceptBank>& banks, const std::vector<Image>& images,
                    const std::vector<int>& labels, std::size_t classes, const PcbmOptions& opts) {
  if (images.empty() || images.size() != labels.size()) throw ContractError("PCBM-h needs one label per image");
  if (banks.empty()) throw ConfigError("PCBM-h needs at least one concept bank");
  if (banks.size() + 1 < classes) {
    std::cerr << "warning: " << banks.size() << " concept(s) for " << classes
              << " classes; the concept head alone cannot separate every class\n";
  }
  PcbmHead head;
  head.layer = net.spec().block_names().back();
  head.classes = classes;
  for (const auto& bank : banks) {
    Lcr cav = fit_filter_cav(bank_activations(net, bank, head.layer), opts.cav);
    cav.concept_name = bank.concept_name;
    head.cavs.push_back(std::move(cav));
  }
  const Tensor feats = final_features(net, images);
  RowMatrix y = RowMatrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) throw ContractError("label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  const RowMatrix s = with_bias(to_matrix(head.scores(feats)));
  const RowMatrix wc = ridge_fit(s, y, opts.ridge);
  head.concept_weights = to_tensor(wc);
  const RowMatrix residual = y - s * wc;
  head.residual_weights = to_tensor(ridge_fit(with_bias(to_matrix(feats)), residual, opts.ridge));
  return head;
}

std::vector<int> pcbm_predict(const PcbmHead& head, const Tensor& features, bool residual) {
  const Tensor lg = head.logits(features, residual);
  std::vector<int> out;
  for (std::size_t r = 0; r < lg.dim(0); ++r) {
    const auto row = lg.row(r);
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

namespace {

nlohmann::json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"values", t.values()}}; }

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
}

std::filesystem::path cav_stem(const std::filesystem::path& path) {
  auto stem = path;
  stem.replace_extension();
  stem += ".cavs";
  return stem;
}

}  // namespace

void save_pcbm(const PcbmHead& head, const std::filesystem::path& path) {
  save_lcrs(head.cavs, cav_stem(path));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"format", "lcrreg-pcbm"},
                        {"version", 1},
                        {"layer", head.layer},
                        {"classes", head.classes},
                        {"concept_weights", tensor_json(head.concept_weights)},
                        {"residual_weights", tensor_json(head.residual_weights)}}
             .dump(1);
}

PcbmHead load_pcbm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "lcrreg-pcbm" || j.at("version") != 1) throw FormatError(path.string() + ": not a PCBM-h head");
    PcbmHead h;
    h.layer = j.at("layer").get<std::string>();
    h.classes = j.at("classes").get<std::size_t>();
    h.concept_weights = tensor_from_json(j.at("concept_weights"));
    h.residual_weights = tensor_from_json(j.at("residual_weights"));
    h.cavs = load_lcrs(cav_stem(path));
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lcrreg
