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

#include "lcrreg/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lcrreg/error.hpp"
#include "lcrreg/random.hpp"

namespace lcrreg {

void ModelSpec::validate() const {
  if (channels.size() < 2) throw ConfigError("model needs at least 2 blocks");
  if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
  if (in_channels == 0) throw ConfigError("model needs at least one input channel");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("channel plan entries must be positive");
  }
  if ((input_size >> channels.size()) == 0) {
    throw ConfigError("input side " + std::to_string(input_size) + " too small for " +
                      std::to_string(channels.size()) + " pooling blocks");
  }
  const auto blocks = block_names();
  for (const auto& t : tap_layers) {
    if (std::find(blocks.begin(), blocks.end(), t) == blocks.end()) {
      throw ConfigError("tap-eligible layer '" + t + "' is not a block");
    }
  }
  if (!aux_layer.empty()) {
    if (aux_layer != "pool" && std::find(blocks.begin(), blocks.end(), aux_layer) == blocks.end()) {
      throw ConfigError("unknown auxiliary head layer '" + aux_layer + "'");
    }
    if (aux_concepts == 0) throw ConfigError("auxiliary head needs at least one concept");
  }
}

std::vector<std::string> ModelSpec::block_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < channels.size(); ++i) names.push_back("block" + std::to_string(i + 1));
  return names;
}

std::vector<std::string> ModelSpec::eligible_taps() const {
  return tap_layers.empty() ? block_names() : tap_layers;
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"input_size", s.input_size}, {"in_channels", s.in_channels},
                     {"channels", s.channels},     {"num_classes", s.num_classes},
                     {"tap_layers", s.tap_layers}, {"aux_layer", s.aux_layer},
                     {"aux_concepts", s.aux_concepts}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  ModelSpec d;
  s.input_size = j.value("input_size", d.input_size);
  s.in_channels = j.value("in_channels", d.in_channels);
  s.channels = j.value("channels", d.channels);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.tap_layers = j.value("tap_layers", d.tap_layers);
  s.aux_layer = j.value("aux_layer", d.aux_layer);
  s.aux_concepts = j.value("aux_concepts", d.aux_concepts);
}

FreezeStage parse_freeze_stage(const std::string& name) {
  if (name == "all") return FreezeStage::kAll;
  if (name == "below-and-including-taps") return FreezeStage::kBelowAndIncludingTaps;
  if (name == "above-taps") return FreezeStage::kAboveTaps;
  throw ConfigError("unknown freeze stage '" + name + "'");
}

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

}  // namespace

Network Network::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  ad::Graph& g = net.graph_;
  net.images_ = g.input("images");
  std::uint64_t stream = 0;
  auto rng_for = [&]() { return make_rng(seed, {hash_name("init"), stream++}); };
  const double relu_gain = std::sqrt(2.0);

  ad::NodeId x = net.images_;
  std::size_t in_ch = spec.in_channels;
  const auto names = spec.block_names();
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::size_t out_ch = spec.channels[i];
    Rng rng = rng_for();
    const ad::NodeId w = g.parameter(names[i] + ".weight",
                                     kaiming_uniform({out_ch, in_ch, 3, 3}, in_ch * 9, relu_gain, rng));
    const ad::NodeId b = g.parameter(names[i] + ".bias", Tensor(Shape{out_ch}, 0.0));
    x = g.maxpool2(g.relu(g.conv2d(x, w, b, 1, 1)));
    g.set_name(x, names[i]);
    net.layers_[names[i]] = x;
    const ad::NodeId p = g.global_avg_pool(x);
    g.set_name(p, names[i] + ".pooled");
    net.pooled_[names[i]] = p;
    in_ch = out_ch;
  }
  const ad::NodeId features = net.pooled_.at(names.back());
  {
    Rng rng = rng_for();
    const ad::NodeId w = g.parameter(
        "head.weight", kaiming_uniform({in_ch, spec.num_classes}, in_ch, 1.0, rng));
    const ad::NodeId b = g.parameter("head.bias", Tensor(Shape{spec.num_classes}, 0.0));
    net.logits_ = g.add(g.matmul(features, w), b);
    g.set_name(net.logits_, "logits");
  }
  if (!spec.aux_layer.empty()) {
    const ad::NodeId src = spec.aux_layer == "pool" ? features : net.pooled_.at(spec.aux_layer);
    const std::size_t width = spec.aux_layer == "pool"
                                  ? in_ch
                                  : spec.channels[net.layer_index(spec.aux_layer) - 1];
    Rng rng = rng_for();
    const ad::NodeId w = g.parameter(
        "aux.weight", kaiming_uniform({width, 2 * spec.aux_concepts}, width, 1.0, rng));
    const ad::NodeId b = g.parameter("aux.bias", Tensor(Shape{2 * spec.aux_concepts}, 0.0));
    net.aux_logits_ = g.add(g.matmul(src, w), b);
    g.set_name(net.aux_logits_, "aux_logits");
  }
  return net;
}

ad::NodeId Network::layer(const std::string& name) const {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw ConfigError("unknown layer '" + name + "'");
  return it->second;
}

ad::NodeId Network::pooled(const std::string& name) const {
  auto it = pooled_.find(name);
  if (it == pooled_.end()) throw ConfigError("unknown layer '" + name + "'");
  return it->second;
}

int Network::layer_index(const std::string& name) const {
  const auto names = spec_.block_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i) + 1;
  }
  if (name == "head") return static_cast<int>(names.size()) + 1;
  if (name == "aux") {
    return spec_.aux_layer == "pool" ? static_cast<int>(names.size()) + 1
                                     : layer_index(spec_.aux_layer) + 1;
  }
  throw ConfigError("unknown layer '" + name + "'");
}

std::string Network::parameter_layer(const std::string& param) const {
  const auto dot = param.find('.');
  if (dot == std::string::npos) throw ConfigError("malformed parameter name '" + param + "'");
  return param.substr(0, dot);
}

void Network::copy_parameters_from(const Network& other) {
  for (const std::string& name : graph_.parameter_names()) {
    const Tensor& src = other.graph().parameter_value(name);
    Tensor& dst = graph_.parameter_value(name);
    if (src.shape() != dst.shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_string(src.shape()) +
                       ", expected " + shape_string(dst.shape()));
    }
    dst = src;
  }
}

void validate_taps(const Network& net, const TapSet& taps) {
  const auto eligible = net.spec().eligible_taps();
  for (const auto& t : taps) {
    if (std::find(eligible.begin(), eligible.end(), t) == eligible.end()) {
      throw ConfigError("unknown tap layer '" + t + "'");
    }
  }
}

TapOutput forward_with_taps(Network& net, const Tensor& images, const TapSet& taps) {
  validate_taps(net, taps);
  std::vector<ad::NodeId> outs{net.logits()};
  for (const auto& t : taps) outs.push_back(net.layer(t));
  net.graph().forward({{"images", images}}, outs);
  TapOutput result;
  result.logits = net.graph().value(net.logits());
  for (const auto& t : taps) result.activations[t] = net.graph().value(net.layer(t));
  return result;
}

std::map<std::string, Tensor> pooled_activations(Network& net, const Tensor& images,
                                                 const TapSet& taps) {
  validate_taps(net, taps);
  std::vector<ad::NodeId> outs;
  for (const auto& t : taps) outs.push_back(net.pooled(t));
  net.graph().forward({{"images", images}}, outs);
  std::map<std::string, Tensor> result;
  for (const auto& t : taps) result[t] = net.graph().value(net.pooled(t));
  return result;
}

Tensor pooled_activation(const Tensor& fm) {
  if (fm.rank() != 4) throw ShapeError("pooled_activation expects [N,C,H,W], got " + shape_string(fm.shape()));
  const std::size_t hw = fm.dim(2) * fm.dim(3);
  Tensor out(Shape{fm.dim(0), fm.dim(1)});
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += fm[p * hw + j];
    out[p] = s / static_cast<double>(hw);
  }
  return out;
}

Network truncate(const Network& net, const std::string& layer) {
  const int depth = net.layer_index(layer);
  if (depth < 1 || depth > static_cast<int>(net.spec().channels.size())) {
    throw ConfigError("cannot truncate at '" + layer + "'");
  }
  Network sub;
  sub.spec_ = net.spec_;
  sub.spec_.aux_layer.clear();
  sub.spec_.aux_concepts = 0;
  ad::Graph& g = sub.graph_;
  sub.images_ = g.input("images");
  ad::NodeId x = sub.images_;
  const auto names = net.spec().block_names();
  for (int i = 0; i < depth; ++i) {
    const ad::NodeId w = g.parameter(names[i] + ".weight", net.graph().parameter_value(names[i] + ".weight"));
    const ad::NodeId b = g.parameter(names[i] + ".bias", net.graph().parameter_value(names[i] + ".bias"));
    x = g.maxpool2(g.relu(g.conv2d(x, w, b, 1, 1)));
    g.set_name(x, names[i]);
    sub.layers_[names[i]] = x;
    sub.pooled_[names[i]] = g.global_avg_pool(x);
  }
  sub.logits_ = sub.pooled_.at(layer);
  return sub;
}

std::set<std::string> freeze_mask(const Network& net, FreezeStage stage, const TapSet& taps) {
  std::set<std::string> trainable;
  const auto names = net.graph().parameter_names();
  if (stage == FreezeStage::kAll) return {names.begin(), names.end()};
  if (taps.empty()) throw ConfigError("tap-relative freeze stage requires taps");
  validate_taps(net, taps);
  int deepest = 0;
  for (const auto& t : taps) deepest = std::max(deepest, net.layer_index(t));
  for (const auto& name : names) {
    const int idx = net.layer_index(net.parameter_layer(name));
    const bool below = idx <= deepest;
    if ((stage == FreezeStage::kBelowAndIncludingTaps) == below) trainable.insert(name);
  }
  return trainable;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  os.write("LCRR", 4);
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  const std::string spec = nlohmann::json(net.spec()).dump();
  write_pod<std::uint64_t>(os, spec.size());
  os.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  const auto names = net.graph().parameter_names();
  write_pod<std::uint64_t>(os, names.size());
  for (const auto& name : names) {
    const Tensor& t = net.graph().parameter_value(name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) write_pod<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.raw()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LCRR", 4) != 0) throw FormatError("not an LCRR checkpoint");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto spec_len = read_pod<std::uint64_t>(is);
  if (spec_len > (1u << 24)) throw FormatError("implausible spec length");
  std::string spec_json(spec_len, '\0');
  is.read(spec_json.data(), static_cast<std::streamsize>(spec_len));
  if (!is) throw FormatError("truncated checkpoint");
  ModelSpec spec;
  try {
    spec = nlohmann::json::parse(spec_json).get<ModelSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model spec in checkpoint: ") + e.what());
  }
  Network net = Network::build(spec, 0);
  const auto count = read_pod<std::uint64_t>(is);
  if (count != net.graph().parameters().size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                      std::to_string(net.graph().parameters().size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is);
    if (name_len > 4096) throw FormatError("implausible parameter name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank > 8) throw FormatError("implausible tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = read_pod<std::uint64_t>(is);
    Tensor& dst = net.graph().parameter_value(name);
    if (dst.shape() != shape) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(dst.shape()));
    }
    is.read(reinterpret_cast<char*>(dst.raw()), static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!is) throw FormatError("truncated checkpoint");
  }
  return net;
}

}  // namespace lcrreg
