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

#ifndef LCRREG_NETWORK_HPP_
#define LCRREG_NETWORK_HPP_

// Small plain CNN classifier: N blocks of conv3x3 -> relu -> maxpool2, then
// global average pooling and a linear head. Block outputs are the layers that
// can be tapped for concept representations.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lcrreg/graph.hpp"
#include "lcrreg/tensor.hpp"
#include "json.hpp"

namespace lcrreg {

struct ModelSpec {
  std::size_t input_size = 64;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{8, 16, 32, 64};
  std::size_t num_classes = 2;
  // Layers that may be tapped. Empty means every block.
  std::vector<std::string> tap_layers;
  // Optional auxiliary concept head: "" (none), "pool" (on the final pooled
  // features) or a block name (on that block's pooled activation). It emits
  // two logits per concept.
  std::string aux_layer;
  std::size_t aux_concepts = 0;

  void validate() const;
  std::vector<std::string> block_names() const;
  std::vector<std::string> eligible_taps() const;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

using TapSet = std::vector<std::string>;

enum class FreezeStage { kAll, kBelowAndIncludingTaps, kAboveTaps };
FreezeStage parse_freeze_stage(const std::string& name);

class Network {
 public:
  // Parameters are Kaiming-uniform (fan-in) initialised from `seed`; biases
  // start at zero.
  static Network build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ad::Graph& graph() { return graph_; }
  const ad::Graph& graph() const { return graph_; }

  ad::NodeId images() const { return images_; }
  ad::NodeId logits() const { return logits_; }
  ad::NodeId aux_logits() const { return aux_logits_; }
  bool has_aux() const { return aux_logits_ != kNone; }

  // Feature map after the named block.
  ad::NodeId layer(const std::string& name) const;
  // Channel-wise global average of layer(name).
  ad::NodeId pooled(const std::string& name) const;

  // Position of a layer in forward order; the head comes after all blocks.
  int layer_index(const std::string& name) const;
  // Layer owning a parameter ("block2", "head", "aux").
  std::string parameter_layer(const std::string& param) const;

  // Copies parameter values from another network with the same names.
  void copy_parameters_from(const Network& other);

  static constexpr ad::NodeId kNone = static_cast<ad::NodeId>(-1);

  friend Network truncate(const Network& net, const std::string& layer);

 private:
  ModelSpec spec_;
  ad::Graph graph_;
  ad::NodeId images_ = kNone;
  ad::NodeId logits_ = kNone;
  ad::NodeId aux_logits_ = kNone;
  std::map<std::string, ad::NodeId> layers_;
  std::map<std::string, ad::NodeId> pooled_;
};

struct TapOutput {
  Tensor logits;
  std::map<std::string, Tensor> activations;  // raw block feature maps
};

TapOutput forward_with_taps(Network& net, const Tensor& images, const TapSet& taps);

// Pooled activations of the named layers without evaluating the head.
std::map<std::string, Tensor> pooled_activations(Network& net, const Tensor& images,
                                                 const TapSet& taps);

// [N,C,H,W] -> [N,C] channel means.
Tensor pooled_activation(const Tensor& feature_map);

// Same blocks as `net` up to and including `layer`, sharing its parameters;
// its logits node is the pooled activation of that layer.
Network truncate(const Network& net, const std::string& layer);

void validate_taps(const Network& net, const TapSet& taps);

std::set<std::string> freeze_mask(const Network& net, FreezeStage stage, const TapSet& taps);

// Checkpoint: "LCRR", u32 version, u64 spec-json length, spec json, u64
// parameter count, then per parameter: u32 name length, name bytes, u32 rank,
// u64 extents, f64 values. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace lcrreg

#endif  // LCRREG_NETWORK_HPP_
