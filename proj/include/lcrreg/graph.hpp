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

#ifndef LCRREG_GRAPH_HPP_
#define LCRREG_GRAPH_HPP_

// Recorded computation graph with reverse-mode differentiation.
//
// Nodes are appended in construction order, which is also a topological
// order: every node's inputs have smaller ids. Shapes are resolved when the
// graph is evaluated, so one graph serves any batch size.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcrreg/tensor.hpp"

namespace lcrreg::ad {

using NodeId = std::size_t;

enum class Op {
  kInput,
  kParameter,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kConv2d,
  kMaxPool2,
  kRelu,
  kGlobalAvgPool,
  kSoftmaxXent,
  kSum,
  kMean,
  kDot,
  kL2Norm,
  kScale,
  kAddScalar,
  kExp,
  kAbs,
  kSqrt,
  kReshape,
};

std::string_view op_name(Op op);

using Feeds = std::map<std::string, Tensor, std::less<>>;
using Gradients = std::map<std::string, Tensor, std::less<>>;

class Graph {
 public:
  // Leaves.
  NodeId input(std::string name, bool requires_grad = false);
  NodeId parameter(std::string name, Tensor init, bool trainable = true);
  NodeId constant(Tensor value, std::string name = {});

  // Elementwise binary ops broadcast with numpy rules.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);

  NodeId matmul(NodeId a, NodeId b);
  // x [N,C,H,W], w [O,C,k,k], b [O]. Zero padding.
  NodeId conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t pad);
  NodeId maxpool2(NodeId x);
  NodeId relu(NodeId x);
  NodeId global_avg_pool(NodeId x);
  // Mean over the batch of -log softmax(logits)[label]; labels hold class
  // indices stored as doubles.
  NodeId softmax_cross_entropy(NodeId logits, NodeId labels);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  // 1-d operands give a scalar; 2-d operands reduce each row.
  NodeId dot(NodeId a, NodeId b);
  NodeId l2norm(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId add_scalar(NodeId x, double offset);
  NodeId exp(NodeId x);
  NodeId abs(NodeId x);
  NodeId sqrt(NodeId x);
  static constexpr std::size_t kInferExtent = static_cast<std::size_t>(-1);
  NodeId reshape(NodeId x, Shape shape);

  void set_name(NodeId id, std::string name);
  void set_constant(NodeId id, Tensor value);
  void set_requires_grad(NodeId id, bool requires_grad);

  // Evaluates every node, or only the ancestors of `outputs`.
  void forward(const Feeds& feeds);
  void forward(const Feeds& feeds, std::span<const NodeId> outputs);

  // Reverse pass from a rank-0 node. Returns the gradient of every trainable
  // parameter (zeros for parameters the output does not depend on).
  Gradients backward(NodeId output);

  const Tensor& value(NodeId id) const;
  // Gradient left on a node by the last backward(); empty if none flowed.
  const Tensor& grad(NodeId id) const;

  std::size_t size() const { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  NodeId find(std::string_view name) const;

  // Parameters in creation order.
  const std::vector<NodeId>& parameters() const { return parameters_; }
  std::vector<std::string> parameter_names() const;
  bool trainable(NodeId id) const { return nodes_.at(id).trainable; }
  Tensor& parameter_value(std::string_view name);
  const Tensor& parameter_value(std::string_view name) const;

 private:
  struct Node {
    Op op = Op::kInput;
    std::vector<NodeId> inputs;
    std::string name;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool trainable = false;
    bool requires_grad = false;
    bool evaluated = false;
    std::size_t stride = 1;
    std::size_t pad = 0;
    double scalar = 0.0;
    Shape target_shape;
    std::vector<std::size_t> argmax;
    std::vector<double> cache;
  };

  NodeId push(Op op, std::vector<NodeId> inputs);
  void eval_node(Node& node);
  void backprop_node(NodeId id);
  std::string describe(NodeId id) const;
  Tensor& grad_slot(NodeId id);

  std::vector<Node> nodes_;
  std::vector<NodeId> parameters_;
};

// Named outputs of a forward pass.
std::map<std::string, Tensor, std::less<>> forward_eval(
    Graph& graph, const Feeds& inputs, std::span<const NodeId> outputs);

// Max over the entries of `parameter` of
//   |analytic - central difference| / (|analytic| + 1e-12).
// The graph output must be rank 0. Parameter values are restored on return.
double finite_diff_check(Graph& graph, const Feeds& feeds, NodeId output,
                         std::string_view parameter, double step);

}  // namespace lcrreg::ad

#endif  // LCRREG_GRAPH_HPP_
