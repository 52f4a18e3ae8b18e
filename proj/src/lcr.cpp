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

#include "lcrreg/lcr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "lcrreg/error.hpp"

namespace lcrreg {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))); }

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Labels as +-1 after checking both classes occur.
Eigen::VectorXd signed_labels(const ActivationSet& set, const char* who) {
  set.validate();
  Eigen::VectorXd y(static_cast<Eigen::Index>(set.rows()));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < set.rows(); ++i) {
    const bool p = set.labels[i] > 0.5;
    pos += p;
    y[static_cast<Eigen::Index>(i)] = p ? 1.0 : -1.0;
  }
  if (pos == 0 || pos == set.rows()) {
    throw FitError(std::string(who) + ": both concept classes must be present (got " + std::to_string(pos) + " of " +
                   std::to_string(set.rows()) + " positive)");
  }
  return y;
}

Lcr base_lcr(LcrKind kind, const ActivationSet& set) {
  Lcr l;
  l.kind = kind;
  l.layer = set.layer;
  l.dim = set.dim();
  return l;
}

double hinge_objective(const Eigen::VectorXd& w, const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                       Eigen::VectorXd& margins) {
  margins = (z * w).cwiseProduct(y);
  return 0.5 * lambda * w.squaredNorm() + (1.0 - margins.array()).max(0.0).mean();
}

double kernel(double sq_dist, double bandwidth) { return std::exp(-sq_dist / (2.0 * bandwidth * bandwidth)); }

}  // namespace

void ActivationSet::validate() const {
  if (acts.rank() != 2 || acts.dim(1) == 0) throw ShapeError("activation set must be [n, d] with d > 0");
  if (labels.size() != acts.dim(0)) {
    throw ShapeError("activation set has " + std::to_string(acts.dim(0)) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
}

std::string to_string(LcrKind k) {
  switch (k) {
    case LcrKind::kFilterCav: return "filter-cav";
    case LcrKind::kPatternCav: return "pattern-cav";
    case LcrKind::kCar: return "car";
    case LcrKind::kRcv: return "rcv";
  }
  return "?";
}

LcrKind parse_lcr_kind(const std::string& s) {
  for (auto k : {LcrKind::kFilterCav, LcrKind::kPatternCav, LcrKind::kCar, LcrKind::kRcv}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown LCR kind '" + s + "'");
}

void to_json(nlohmann::json& j, const LcrFitOptions& o) {
  j = {{"hinge_lambda", o.hinge_lambda},
       {"hinge_iterations", o.hinge_iterations},
       {"car_lambda", o.car_lambda},
       {"car_bandwidth", o.car_bandwidth},
       {"rcv_lambda", o.rcv_lambda}};
}

void from_json(const nlohmann::json& j, LcrFitOptions& o) {
  o.hinge_lambda = j.value("hinge_lambda", o.hinge_lambda);
  o.hinge_iterations = j.value("hinge_iterations", o.hinge_iterations);
  o.car_lambda = j.value("car_lambda", o.car_lambda);
  o.car_bandwidth = j.value("car_bandwidth", o.car_bandwidth);
  o.rcv_lambda = j.value("rcv_lambda", o.rcv_lambda);
}

double Lcr::phi(std::span<const double> x) const {
  if (x.size() != dim) throw ShapeError("phi: expected " + std::to_string(dim) + " features, got " + std::to_string(x.size()));
  if (kind != LcrKind::kCar) {
    double s = bias;
    for (std::size_t i = 0; i < dim; ++i) s += direction[i] * x[i];
    return s;
  }
  double s = 0.0;
  for (std::size_t r = 0; r < dual.size(); ++r) {
    const auto sv = support.row(r);
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) d2 += (sv[i] - x[i]) * (sv[i] - x[i]);
    s += dual[r] * kernel(d2, bandwidth);
  }
  return s;
}

std::vector<double> Lcr::phi_rows(const Tensor& acts) const {
  if (acts.rank() != 2) throw ShapeError("phi_rows expects [n, d]");
  std::vector<double> out(acts.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = phi(acts.row(r));
  return out;
}

Lcr fit_filter_cav(const ActivationSet& set, const LcrFitOptions& opts) {
  const Eigen::VectorXd y = signed_labels(set, "filter-cav");
  if (opts.hinge_lambda <= 0 || opts.hinge_iterations < 1) throw ConfigError("filter-cav needs lambda > 0 and iterations >= 1");
  const ConstMap x = as_matrix(set.acts);
  const auto n = x.rows(), d = x.cols();
  const Eigen::RowVectorXd mu = x.colwise().mean();
  // Centred features plus a constant column for the offset.
  Eigen::MatrixXd z(n, d + 1);
  z.leftCols(d) = x.rowwise() - mu;
  z.col(d).setOnes();

  const double lambda = opts.hinge_lambda;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1), best = w, margins;
  double best_obj = hinge_objective(w, z, y, lambda, margins);
  for (int t = 1; t <= opts.hinge_iterations; ++t) {
    Eigen::VectorXd g = lambda * w;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (margins[i] < 1.0) g.noalias() -= (inv_n * y[i]) * z.row(i).transpose();
    }
    w -= g / (lambda * t);
    const double obj = hinge_objective(w, z, y, lambda, margins);
    if (!std::isfinite(obj)) break;
    if (obj < best_obj) {
      best_obj = obj;
      best = w;
    }
  }
  const Eigen::VectorXd wx = best.head(d);
  const double norm = wx.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw FitError("filter-cav: hinge solver did not move off zero after " + std::to_string(opts.hinge_iterations) +
                   " iterations");
  }
  Lcr l = base_lcr(LcrKind::kFilterCav, set);
  l.options = opts;
  l.direction = to_std(wx / norm);
  l.bias = (best[d] - wx.dot(mu.transpose())) / norm;
  return l;
}

Lcr fit_pattern_cav(const ActivationSet& set) {
  signed_labels(set, "pattern-cav");
  const std::size_t d = set.dim();
  std::vector<double> mp(d, 0.0), mn(d, 0.0);
  double np = 0, nn = 0;
  for (std::size_t r = 0; r < set.rows(); ++r) {
    const auto row = set.acts.row(r);
    auto& m = set.labels[r] > 0.5 ? mp : mn;
    (set.labels[r] > 0.5 ? np : nn) += 1;
    for (std::size_t i = 0; i < d; ++i) m[i] += row[i];
  }
  double norm2 = 0.0;
  std::vector<double> diff(d), mid(d);
  for (std::size_t i = 0; i < d; ++i) {
    mp[i] /= np;
    mn[i] /= nn;
    diff[i] = mp[i] - mn[i];
    mid[i] = 0.5 * (mp[i] + mn[i]);
    norm2 += diff[i] * diff[i];
  }
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) throw FitError("pattern-cav: class means coincide, direction undefined");
  Lcr l = base_lcr(LcrKind::kPatternCav, set);
  l.direction.resize(d);
  l.bias = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    l.direction[i] = diff[i] / norm;
    l.bias -= l.direction[i] * mid[i];
  }
  return l;
}

double median_pairwise_distance(const Tensor& acts) {
  const ConstMap x = as_matrix(acts);
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) dists.push_back((x.row(i) - x.row(j)).norm());
  if (dists.empty()) throw FitError("median pairwise distance needs two rows");
  return median(std::move(dists));
}

Lcr fit_car(const ActivationSet& set, const LcrFitOptions& opts) {
  const Eigen::VectorXd y = signed_labels(set, "car");
  const ConstMap x = as_matrix(set.acts);
  const auto n = x.rows();
  const double sigma = opts.car_bandwidth > 0 ? opts.car_bandwidth : median_pairwise_distance(set.acts);
  if (!(sigma > 0.0)) throw FitError("car: zero kernel bandwidth (all activations identical)");
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel((x.row(i) - x.row(j)).squaredNorm(), sigma);
  }
  k.diagonal().array() += opts.car_lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw FitError("car: kernel system is singular");
  const Eigen::VectorXd a = llt.solve(y);
  if (!a.allFinite()) throw FitError("car: kernel system is singular");
  Lcr l = base_lcr(LcrKind::kCar, set);
  l.options = opts;
  l.options.car_bandwidth = sigma;
  l.bandwidth = sigma;
  l.support = set.acts;
  l.dual = to_std(a);
  return l;
}

Lcr fit_rcv(const ActivationSet& set, const LcrFitOptions& opts) {
  set.validate();
  const auto [lo, hi] = std::minmax_element(set.labels.begin(), set.labels.end());
  if (set.labels.empty() || *lo == *hi) throw FitError("rcv: scores are constant");
  const ConstMap x = as_matrix(set.acts);
  const Eigen::VectorXd y = as_vector(set.labels);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mu;
  const Eigen::VectorXd yc = y.array() - y.mean();
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += opts.rcv_lambda;
  const Eigen::VectorXd w = gram.ldlt().solve(xc.transpose() * yc);
  const double norm = w.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw FitError("rcv: regression weights vanish");
  Lcr l = base_lcr(LcrKind::kRcv, set);
  l.options = opts;
  const Eigen::VectorXd v = w / norm;
  l.direction = to_std(v);
  const Eigen::VectorXd proj = x * v;
  l.bias = -median(to_std(proj));
  // Affine map from projection to score for R^2.
  const double pm = proj.mean();
  const Eigen::VectorXd pc = proj.array() - pm;
  const double var = pc.squaredNorm();
  l.calib_slope = var > 0 ? pc.dot(yc) / var : 0.0;
  l.calib_intercept = y.mean() - l.calib_slope * pm;
  return l;
}

Lcr fit_lcr(LcrKind kind, const ActivationSet& set, const LcrFitOptions& opts) {
  switch (kind) {
    case LcrKind::kFilterCav: return fit_filter_cav(set, opts);
    case LcrKind::kPatternCav: return fit_pattern_cav(set);
    case LcrKind::kCar: return fit_car(set, opts);
    case LcrKind::kRcv: return fit_rcv(set, opts);
  }
  throw ContractError("unknown LCR kind");
}

double lcr_holdout_score(const Lcr& lcr, const ActivationSet& held) {
  if (held.rows() == 0) throw ContractError("empty held-out set");
  held.validate();
  if (held.dim() != lcr.dim) throw ShapeError("held-out activations have the wrong width");
  if (lcr.kind != LcrKind::kRcv) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < held.rows(); ++r) hits += (lcr.phi(held.acts.row(r)) > 0.0) == (held.labels[r] > 0.5);
    return static_cast<double>(hits) / static_cast<double>(held.rows());
  }
  double mean = 0.0;
  for (double s : held.labels) mean += s;
  mean /= static_cast<double>(held.rows());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t r = 0; r < held.rows(); ++r) {
    const double p = lcr.phi(held.acts.row(r)) - lcr.bias;
    const double e = held.labels[r] - (lcr.calib_slope * p + lcr.calib_intercept);
    ss_res += e * e;
    ss_tot += (held.labels[r] - mean) * (held.labels[r] - mean);
  }
  if (ss_tot == 0.0) throw ContractError("held-out scores are constant; R^2 undefined");
  return 1.0 - ss_res / ss_tot;
}

namespace {

constexpr int kArchiveVersion = 1;

struct Blob {
  std::vector<double> data;
  nlohmann::json put(std::span<const double> v) {
    const std::size_t off = data.size();
    data.insert(data.end(), v.begin(), v.end());
    return {{"offset", off}, {"count", v.size()}};
  }
  std::vector<double> get(const nlohmann::json& j) const {
    const auto off = j.at("offset").get<std::size_t>(), count = j.at("count").get<std::size_t>();
    if (off + count > data.size()) throw FormatError("LCR blob is truncated");
    return {data.begin() + static_cast<std::ptrdiff_t>(off), data.begin() + static_cast<std::ptrdiff_t>(off + count)};
  }
};

}  // namespace

void save_lcrs(const std::vector<Lcr>& lcrs, const std::filesystem::path& stem) {
  static_assert(std::endian::native == std::endian::little, "archive blobs are little-endian");
  Blob blob;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& l : lcrs) {
    nlohmann::json j = {{"kind", to_string(l.kind)},
                        {"concept", l.concept_name},
                        {"layer", l.layer},
                        {"dim", l.dim},
                        {"bias", l.bias},
                        {"bandwidth", l.bandwidth},
                        {"calib_slope", l.calib_slope},
                        {"calib_intercept", l.calib_intercept},
                        {"options", l.options},
                        {"direction", blob.put(l.direction)},
                        {"dual", blob.put(l.dual)}};
    const bool has_support = l.support.rank() == 2;
    j["support"] = blob.put(has_support ? l.support.data() : std::span<const double>{});
    j["support_rows"] = has_support ? l.support.dim(0) : 0;
    items.push_back(std::move(j));
  }
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  std::ofstream b(bin, std::ios::binary);
  b.write(reinterpret_cast<const char*>(blob.data.data()), static_cast<std::streamsize>(blob.data.size() * sizeof(double)));
  if (!b) throw FormatError("cannot write " + bin.string());
  std::ofstream(meta) << nlohmann::json{{"format", "lcrreg-lcr"},
                                        {"version", kArchiveVersion},
                                        {"blob", bin.filename().string()},
                                        {"lcrs", items}}
                             .dump(1)
                      << '\n';
}

std::vector<Lcr> load_lcrs(const std::filesystem::path& stem) {
  auto meta = stem;
  meta += ".json";
  std::ifstream in(meta);
  if (!in) throw FormatError("cannot open " + meta.string());
  std::vector<Lcr> out;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format") != "lcrreg-lcr" || j.at("version").get<int>() != kArchiveVersion) {
      throw FormatError(meta.string() + " is not a version " + std::to_string(kArchiveVersion) + " LCR archive");
    }
    const auto bin = meta.parent_path() / j.at("blob").get<std::string>();
    std::ifstream b(bin, std::ios::binary | std::ios::ate);
    if (!b) throw FormatError("cannot open " + bin.string());
    const auto bytes = static_cast<std::size_t>(b.tellg());
    if (bytes % sizeof(double)) throw FormatError(bin.string() + " is not a whole number of doubles");
    Blob blob;
    blob.data.resize(bytes / sizeof(double));
    b.seekg(0);
    b.read(reinterpret_cast<char*>(blob.data.data()), static_cast<std::streamsize>(bytes));
    for (const auto& jl : j.at("lcrs")) {
      Lcr l;
      l.kind = parse_lcr_kind(jl.at("kind").get<std::string>());
      l.concept_name = jl.at("concept").get<std::string>();
      l.layer = jl.at("layer").get<std::string>();
      l.dim = jl.at("dim").get<std::size_t>();
      l.bias = jl.at("bias").get<double>();
      l.bandwidth = jl.at("bandwidth").get<double>();
      l.calib_slope = jl.at("calib_slope").get<double>();
      l.calib_intercept = jl.at("calib_intercept").get<double>();
      l.options = jl.at("options").get<LcrFitOptions>();
      l.direction = blob.get(jl.at("direction"));
      l.dual = blob.get(jl.at("dual"));
      const auto rows = jl.at("support_rows").get<std::size_t>();
      auto support = blob.get(jl.at("support"));
      if (rows > 0) l.support = Tensor(Shape{rows, l.dim}, std::move(support));
      if (has_direction(l.kind) && l.direction.size() != l.dim) throw FormatError("LCR direction has the wrong width");
      if (l.kind == LcrKind::kCar && l.dual.size() != rows) throw FormatError("CAR dual/support mismatch");
      out.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(meta.string() + ": " + e.what());
  }
  return out;
}

}  // namespace lcrreg
