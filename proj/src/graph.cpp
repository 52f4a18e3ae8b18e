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

#include "lcrreg/graph.hpp"

#include <algorithm>
#include <cmath>

#include "lcrreg/error.hpp"
#include "lcrreg/kernels.hpp"

namespace lcrreg::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kMatMul: return "matmul";
    case Op::kConv2d: return "conv2d";
    case Op::kMaxPool2: return "maxpool2";
    case Op::kRelu: return "relu";
    case Op::kGlobalAvgPool: return "global_avg_pool";
    case Op::kSoftmaxXent: return "softmax_cross_entropy";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kDot: return "dot";
    case Op::kL2Norm: return "l2norm";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kExp: return "exp";
    case Op::kAbs: return "abs";
    case Op::kSqrt: return "sqrt";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t rank,
                                         const Shape& out) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t acc = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t axis = s.size() - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = (s[axis] == 1 && out[out_axis] != 1) ? 0 : acc;
    acc *= s[axis];
  }
  return strides;
}

Broadcast make_broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_string(a) + " with " +
                       shape_string(b));
    }
    bc.out[rank - 1 - i] = std::max(da, db);
  }
  bc.stride_a = aligned_strides(a, rank, bc.out);
  bc.stride_b = aligned_strides(b, rank, bc.out);
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t total = shape_size(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += bc.stride_a[ax];
      ib += bc.stride_b[ax];
      if (idx[ax] < bc.out[ax]) break;
      ia -= bc.stride_a[ax] * idx[ax];
      ib -= bc.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " +
                     std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

void add_into(Tensor& dst, std::span<const double> src) {
  double* d = dst.raw();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += src[i];
}

}  // namespace

NodeId Graph::push(Op op, std::vector<NodeId> inputs) {
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) {
      throw ContractError("node input " + std::to_string(in) + " does not exist");
    }
  }
  Node node;
  node.op = op;
  node.inputs = std::move(inputs);
  for (NodeId in : node.inputs) node.requires_grad |= nodes_[in].requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::input(std::string name, bool requires_grad) {
  const NodeId id = push(Op::kInput, {});
  nodes_[id].name = std::move(name);
  nodes_[id].requires_grad = requires_grad;
  return id;
}

NodeId Graph::parameter(std::string name, Tensor init, bool trainable) {
  if (find(name) != static_cast<NodeId>(-1)) {
    throw ContractError("duplicate node name '" + name + "'");
  }
  const NodeId id = push(Op::kParameter, {});
  Node& n = nodes_[id];
  n.name = std::move(name);
  n.value = std::move(init);
  n.trainable = trainable;
  n.requires_grad = true;
  n.evaluated = true;
  parameters_.push_back(id);
  return id;
}

NodeId Graph::constant(Tensor value, std::string name) {
  const NodeId id = push(Op::kConstant, {});
  nodes_[id].name = std::move(name);
  nodes_[id].value = std::move(value);
  nodes_[id].evaluated = true;
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Op::kAdd, {a, b}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Op::kSub, {a, b}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Op::kMul, {a, b}); }
NodeId Graph::div(NodeId a, NodeId b) { return push(Op::kDiv, {a, b}); }
NodeId Graph::matmul(NodeId a, NodeId b) { return push(Op::kMatMul, {a, b}); }

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride,
                     std::size_t pad) {
  if (stride != 1 && stride != 2) {
    throw ContractError("conv2d stride must be 1 or 2");
  }
  const NodeId id = push(Op::kConv2d, {x, w, b});
  nodes_[id].stride = stride;
  nodes_[id].pad = pad;
  return id;
}

NodeId Graph::maxpool2(NodeId x) { return push(Op::kMaxPool2, {x}); }
NodeId Graph::relu(NodeId x) { return push(Op::kRelu, {x}); }
NodeId Graph::global_avg_pool(NodeId x) { return push(Op::kGlobalAvgPool, {x}); }
NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId labels) {
  return push(Op::kSoftmaxXent, {logits, labels});
}
NodeId Graph::sum(NodeId x) { return push(Op::kSum, {x}); }
NodeId Graph::mean(NodeId x) { return push(Op::kMean, {x}); }
NodeId Graph::dot(NodeId a, NodeId b) { return push(Op::kDot, {a, b}); }
NodeId Graph::l2norm(NodeId x) { return push(Op::kL2Norm, {x}); }

NodeId Graph::scale(NodeId x, double factor) {
  const NodeId id = push(Op::kScale, {x});
  nodes_[id].scalar = factor;
  return id;
}

NodeId Graph::add_scalar(NodeId x, double offset) {
  const NodeId id = push(Op::kAddScalar, {x});
  nodes_[id].scalar = offset;
  return id;
}

NodeId Graph::exp(NodeId x) { return push(Op::kExp, {x}); }
NodeId Graph::abs(NodeId x) { return push(Op::kAbs, {x}); }
NodeId Graph::sqrt(NodeId x) { return push(Op::kSqrt, {x}); }

NodeId Graph::reshape(NodeId x, Shape shape) {
  if (std::count(shape.begin(), shape.end(), kInferExtent) > 1) {
    throw ContractError("reshape allows at most one inferred extent");
  }
  const NodeId id = push(Op::kReshape, {x});
  nodes_[id].target_shape = std::move(shape);
  return id;
}

void Graph::set_name(NodeId id, std::string name) { nodes_.at(id).name = std::move(name); }

void Graph::set_constant(NodeId id, Tensor value) {
  Node& n = nodes_.at(id);
  if (n.op != Op::kConstant) throw ContractError("set_constant on non-constant node");
  n.value = std::move(value);
}

void Graph::set_requires_grad(NodeId id, bool requires_grad) {
  Node& n = nodes_.at(id);
  if (n.op != Op::kInput) throw ContractError("set_requires_grad on non-input node");
  n.requires_grad = requires_grad;
}

NodeId Graph::find(std::string_view name) const {
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  return static_cast<NodeId>(-1);
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(parameters_.size());
  for (NodeId p : parameters_) names.push_back(nodes_[p].name);
  return names;
}

Tensor& Graph::parameter_value(std::string_view name) {
  for (NodeId p : parameters_) {
    if (nodes_[p].name == name) return nodes_[p].value;
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Tensor& Graph::parameter_value(std::string_view name) const {
  return const_cast<Graph*>(this)->parameter_value(name);
}

const Tensor& Graph::value(NodeId id) const { return nodes_.at(id).value; }

const Tensor& Graph::grad(NodeId id) const {
  static const Tensor kEmpty(Shape{0});
  const Node& n = nodes_.at(id);
  return n.has_grad ? n.grad : kEmpty;
}

std::string Graph::describe(NodeId id) const {
  const Node& n = nodes_[id];
  std::string s = "node " + std::to_string(id) + " (" + std::string(op_name(n.op));
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

void Graph::forward(const Feeds& feeds) {
  std::vector<NodeId> all(nodes_.size());
  for (NodeId i = 0; i < all.size(); ++i) all[i] = i;
  forward(feeds, all);
}

void Graph::forward(const Feeds& feeds, std::span<const NodeId> outputs) {
  std::vector<char> needed(nodes_.size(), 0);
  for (NodeId o : outputs) needed.at(o) = 1;
  for (NodeId i = nodes_.size(); i-- > 0;) {
    if (!needed[i]) continue;
    for (NodeId in : nodes_[i].inputs) needed[in] = 1;
  }
  for (Node& n : nodes_) {
    if (n.op != Op::kParameter && n.op != Op::kConstant) n.evaluated = false;
  }
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (!needed[i]) continue;
    Node& n = nodes_[i];
    if (n.op == Op::kInput) {
      auto it = feeds.find(n.name);
      if (it == feeds.end()) {
        throw ContractError("input '" + n.name + "' is not bound");
      }
      n.value = it->second;
    } else if (n.op != Op::kParameter && n.op != Op::kConstant) {
      try {
        eval_node(n);
      } catch (const ShapeError& e) {
        throw ShapeError(describe(i) + ": " + e.what());
      }
      if (!n.value.all_finite()) {
        throw NumericError(describe(i) + " produced a non-finite value");
      }
    }
    n.evaluated = true;
  }
}

void Graph::eval_node(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Broadcast bc = make_broadcast(a.shape(), b.shape());
      Tensor out(bc.out);
      double* o = out.raw();
      const double* pa = a.raw();
      const double* pb = b.raw();
      switch (n.op) {
        case Op::kAdd:
          for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] + pb[ib]; });
          break;
        case Op::kSub:
          for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] - pb[ib]; });
          break;
        case Op::kMul:
          for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] * pb[ib]; });
          break;
        default:
          for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { o[i] = pa[ia] / pb[ib]; });
          break;
      }
      n.value = std::move(out);
      return;
    }
    case Op::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank(a, 2, "matmul lhs");
      require_rank(b, 2, "matmul rhs");
      if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner extents differ: " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
      }
      Tensor out(Shape{a.dim(0), b.dim(1)});
      kernels::parallel::matmul(a.dim(0), a.dim(1), b.dim(1), a.raw(), b.raw(), out.raw());
      n.value = std::move(out);
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      require_rank(x, 4, "conv2d input");
      require_rank(w, 4, "conv2d weight");
      if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) || b.rank() != 1 ||
          b.dim(0) != w.dim(0)) {
        throw ShapeError("conv2d operands inconsistent: input " + shape_string(x.shape()) +
                         ", weight " + shape_string(w.shape()) + ", bias " +
                         shape_string(b.shape()));
      }
      kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                              w.dim(2), n.stride, n.pad};
      if (x.dim(2) + 2 * n.pad < g.kernel || x.dim(3) + 2 * n.pad < g.kernel) {
        throw ShapeError("conv2d kernel larger than padded input " + shape_string(x.shape()));
      }
      Tensor out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
      kernels::parallel::conv2d_forward(g, x.raw(), w.raw(), b.raw(), out.raw());
      n.value = std::move(out);
      return;
    }
    case Op::kMaxPool2: {
      const Tensor& x = in(0);
      require_rank(x, 4, "maxpool2");
      if (x.dim(2) < 2 || x.dim(3) < 2) throw ShapeError("maxpool2 input smaller than 2x2");
      kernels::PoolGeometry g{x.dim(0) * x.dim(1), x.dim(2), x.dim(3)};
      Tensor out(Shape{x.dim(0), x.dim(1), g.out_h(), g.out_w()});
      n.argmax.resize(out.size());
      kernels::parallel::maxpool2_forward(g, x.raw(), out.raw(), n.argmax.data());
      n.value = std::move(out);
      return;
    }
    case Op::kRelu: {
      Tensor out = in(0);
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      n.value = std::move(out);
      return;
    }
    case Op::kGlobalAvgPool: {
      const Tensor& x = in(0);
      require_rank(x, 4, "global_avg_pool");
      const std::size_t hw = x.dim(2) * x.dim(3);
      Tensor out(Shape{x.dim(0), x.dim(1)});
      for (std::size_t p = 0; p < out.size(); ++p) {
        double s = 0.0;
        const double* src = x.raw() + p * hw;
        for (std::size_t j = 0; j < hw; ++j) s += src[j];
        out[p] = s / static_cast<double>(hw);
      }
      n.value = std::move(out);
      return;
    }
    case Op::kSoftmaxXent: {
      const Tensor& logits = in(0);
      const Tensor& labels = in(1);
      require_rank(logits, 2, "softmax_cross_entropy logits");
      const std::size_t batch = logits.dim(0), classes = logits.dim(1);
      if (labels.size() != batch || batch == 0) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_string(logits.shape()));
      }
      n.cache.assign(batch * classes, 0.0);
      double loss = 0.0;
      for (std::size_t r = 0; r < batch; ++r) {
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        const double label = labels[r];
        if (label < 0 || label >= static_cast<double>(classes) || label != std::floor(label)) {
          throw ShapeError("label " + std::to_string(label) + " out of range for " +
                           std::to_string(classes) + " classes");
        }
        const auto y = static_cast<std::size_t>(label);
        for (std::size_t c = 0; c < classes; ++c) {
          n.cache[r * classes + c] = std::exp(row[c] - mx) / z;
        }
        loss += std::log(z) - (row[y] - mx);
      }
      n.value = Tensor::scalar(loss / static_cast<double>(batch));
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      const Tensor& x = in(0);
      double s = 0.0;
      for (double v : x.data()) s += v;
      if (n.op == Op::kMean) {
        if (x.size() == 0) throw ShapeError("mean of empty tensor");
        s /= static_cast<double>(x.size());
      }
      n.value = Tensor::scalar(s);
      return;
    }
    case Op::kDot: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape() || (a.rank() != 1 && a.rank() != 2)) {
        throw ShapeError("dot operands " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
      }
      if (a.rank() == 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        n.value = Tensor::scalar(s);
      } else {
        Tensor out(Shape{a.dim(0)});
        for (std::size_t r = 0; r < a.dim(0); ++r) {
          const auto ra = a.row(r), rb = b.row(r);
          double s = 0.0;
          for (std::size_t i = 0; i < ra.size(); ++i) s += ra[i] * rb[i];
          out[r] = s;
        }
        n.value = std::move(out);
      }
      return;
    }
    case Op::kL2Norm: {
      const Tensor& x = in(0);
      if (x.rank() == 1) {
        double s = 0.0;
        for (double v : x.data()) s += v * v;
        n.value = Tensor::scalar(std::sqrt(s));
      } else if (x.rank() == 2) {
        Tensor out(Shape{x.dim(0)});
        for (std::size_t r = 0; r < x.dim(0); ++r) {
          double s = 0.0;
          for (double v : x.row(r)) s += v * v;
          out[r] = std::sqrt(s);
        }
        n.value = std::move(out);
      } else {
        throw ShapeError("l2norm expects rank 1 or 2, got " + shape_string(x.shape()));
      }
      return;
    }
    case Op::kScale:
    case Op::kAddScalar:
    case Op::kExp:
    case Op::kAbs:
    case Op::kSqrt: {
      Tensor out = in(0);
      for (double& v : out.data()) {
        switch (n.op) {
          case Op::kScale: v *= n.scalar; break;
          case Op::kAddScalar: v += n.scalar; break;
          case Op::kExp: v = std::exp(v); break;
          case Op::kAbs: v = std::fabs(v); break;
          default: v = std::sqrt(v); break;
        }
      }
      n.value = std::move(out);
      return;
    }
    case Op::kReshape: {
      const Tensor& x = in(0);
      Shape shape = n.target_shape;
      auto infer = std::find(shape.begin(), shape.end(), kInferExtent);
      if (infer != shape.end()) {
        *infer = 1;
        const std::size_t known = shape_size(shape);
        if (known == 0 || x.size() % known != 0) {
          throw ShapeError("cannot infer reshape of " + shape_string(x.shape()));
        }
        *infer = x.size() / known;
      }
      n.value = x.reshaped(std::move(shape));
      return;
    }
  }
}

Tensor& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

Gradients Graph::backward(NodeId output) {
  Node& out = nodes_.at(output);
  if (out.value.rank() != 0) {
    throw ContractError("backward requires a rank-0 output, got " +
                        shape_string(out.value.shape()) + " at " + describe(output));
  }
  if (!out.evaluated) throw ContractError("backward before forward at " + describe(output));
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor(Shape{0});
    if (!n.inputs.empty()) {
      n.requires_grad = false;
      for (NodeId in : n.inputs) n.requires_grad |= nodes_[in].requires_grad;
    }
  }
  grad_slot(output)[0] = 1.0;
  for (NodeId id = output + 1; id-- > 0;) {
    if (nodes_[id].has_grad && !nodes_[id].inputs.empty()) backprop_node(id);
  }
  Gradients grads;
  for (NodeId p : parameters_) {
    const Node& n = nodes_[p];
    if (!n.trainable) continue;
    grads.emplace(n.name, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
  }
  return grads;
}

void Graph::backprop_node(NodeId id) {
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto want = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
  auto val = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto slot = [&](std::size_t k) -> Tensor& { return grad_slot(n.inputs[k]); };

  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const Broadcast bc = make_broadcast(a.shape(), b.shape());
      const double* pg = g.raw();
      const double* pa = a.raw();
      const double* pb = b.raw();
      if (want(0)) {
        double* ga = slot(0).raw();
        switch (n.op) {
          case Op::kAdd:
          case Op::kSub:
            for_each_broadcast(bc, [&](auto i, auto ia, auto) { ga[ia] += pg[i]; });
            break;
          case Op::kMul:
            for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { ga[ia] += pg[i] * pb[ib]; });
            break;
          default:
            for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { ga[ia] += pg[i] / pb[ib]; });
            break;
        }
      }
      if (want(1)) {
        double* gb = slot(1).raw();
        switch (n.op) {
          case Op::kAdd:
            for_each_broadcast(bc, [&](auto i, auto, auto ib) { gb[ib] += pg[i]; });
            break;
          case Op::kSub:
            for_each_broadcast(bc, [&](auto i, auto, auto ib) { gb[ib] -= pg[i]; });
            break;
          case Op::kMul:
            for_each_broadcast(bc, [&](auto i, auto ia, auto ib) { gb[ib] += pg[i] * pa[ia]; });
            break;
          default:
            for_each_broadcast(bc, [&](auto i, auto ia, auto ib) {
              gb[ib] -= pg[i] * pa[ia] / (pb[ib] * pb[ib]);
            });
            break;
        }
      }
      return;
    }
    case Op::kMatMul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
      if (want(0)) {
        std::vector<double> tmp(m * k);
        kernels::parallel::matmul_nt(m, k, cols, g.raw(), b.raw(), tmp.data());
        add_into(slot(0), tmp);
      }
      if (want(1)) {
        std::vector<double> tmp(k * cols);
        kernels::parallel::matmul_tn(m, k, cols, a.raw(), g.raw(), tmp.data());
        add_into(slot(1), tmp);
      }
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = val(0);
      const Tensor& w = val(1);
      kernels::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                                w.dim(2), n.stride, n.pad};
      std::vector<double> dx(want(0) ? x.size() : 0);
      std::vector<double> dw(want(1) ? w.size() : 0);
      std::vector<double> db(want(2) ? w.dim(0) : 0);
      kernels::parallel::conv2d_backward(geo, x.raw(), w.raw(), g.raw(),
                                         want(0) ? dx.data() : nullptr,
                                         want(1) ? dw.data() : nullptr,
                                         want(2) ? db.data() : nullptr);
      if (want(0)) add_into(slot(0), dx);
      if (want(1)) add_into(slot(1), dw);
      if (want(2)) add_into(slot(2), db);
      return;
    }
    case Op::kMaxPool2: {
      if (!want(0)) return;
      const Tensor& x = val(0);
      kernels::PoolGeometry geo{x.dim(0) * x.dim(1), x.dim(2), x.dim(3)};
      std::vector<double> dx(x.size());
      kernels::parallel::maxpool2_backward(geo, g.raw(), n.argmax.data(), dx.data());
      add_into(slot(0), dx);
      return;
    }
    case Op::kRelu: {
      if (!want(0)) return;
      const Tensor& x = val(0);
      double* gx = slot(0).raw();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      return;
    }
    case Op::kGlobalAvgPool: {
      if (!want(0)) return;
      const Tensor& x = val(0);
      const std::size_t hw = x.dim(2) * x.dim(3);
      double* gx = slot(0).raw();
      const double inv = 1.0 / static_cast<double>(hw);
      for (std::size_t p = 0; p < g.size(); ++p) {
        const double v = g[p] * inv;
        for (std::size_t j = 0; j < hw; ++j) gx[p * hw + j] += v;
      }
      return;
    }
    case Op::kSoftmaxXent: {
      if (!want(0)) return;
      const Tensor& logits = val(0);
      const Tensor& labels = val(1);
      const std::size_t batch = logits.dim(0), classes = logits.dim(1);
      const double scale = g[0] / static_cast<double>(batch);
      double* gl = slot(0).raw();
      for (std::size_t r = 0; r < batch; ++r) {
        const auto y = static_cast<std::size_t>(labels[r]);
        for (std::size_t c = 0; c < classes; ++c) {
          const double p = n.cache[r * classes + c] - (c == y ? 1.0 : 0.0);
          gl[r * classes + c] += scale * p;
        }
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      if (!want(0)) return;
      Tensor& gx = slot(0);
      double v = g[0];
      if (n.op == Op::kMean) v /= static_cast<double>(gx.size());
      for (double& e : gx.data()) e += v;
      return;
    }
    case Op::kDot: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const std::size_t rows = a.rank() == 1 ? 1 : a.dim(0);
      const std::size_t cols = a.size() / std::max<std::size_t>(rows, 1);
      for (std::size_t side = 0; side < 2; ++side) {
        if (!want(side)) continue;
        const Tensor& other = side == 0 ? b : a;
        double* gx = slot(side).raw();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < cols; ++i) gx[r * cols + i] += g[r] * other[r * cols + i];
        }
      }
      return;
    }
    case Op::kL2Norm: {
      if (!want(0)) return;
      const Tensor& x = val(0);
      const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
      const std::size_t cols = x.size() / std::max<std::size_t>(rows, 1);
      double* gx = slot(0).raw();
      for (std::size_t r = 0; r < rows; ++r) {
        const double norm = n.value[r];
        if (norm == 0.0) continue;
        for (std::size_t i = 0; i < cols; ++i) gx[r * cols + i] += g[r] * x[r * cols + i] / norm;
      }
      return;
    }
    case Op::kScale:
    case Op::kAddScalar:
    case Op::kExp:
    case Op::kAbs:
    case Op::kSqrt:
    case Op::kReshape: {
      if (!want(0)) return;
      const Tensor& x = val(0);
      double* gx = slot(0).raw();
      for (std::size_t i = 0; i < x.size(); ++i) {
        switch (n.op) {
          case Op::kScale: gx[i] += g[i] * n.scalar; break;
          case Op::kExp: gx[i] += g[i] * n.value[i]; break;
          case Op::kAbs: gx[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0); break;
          case Op::kSqrt:
            if (n.value[i] > 0.0) gx[i] += g[i] * 0.5 / n.value[i];
            break;
          default: gx[i] += g[i]; break;
        }
      }
      return;
    }
  }
}

std::map<std::string, Tensor, std::less<>> forward_eval(
    Graph& graph, const Feeds& inputs, std::span<const NodeId> outputs) {
  graph.forward(inputs, outputs);
  std::map<std::string, Tensor, std::less<>> result;
  for (NodeId o : outputs) {
    std::string key = graph.name(o).empty() ? "node" + std::to_string(o) : graph.name(o);
    result.emplace(std::move(key), graph.value(o));
  }
  return result;
}

double finite_diff_check(Graph& graph, const Feeds& feeds, NodeId output,
                         std::string_view parameter, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check step must be positive");
  const NodeId pid = graph.find(parameter);
  if (pid == static_cast<NodeId>(-1) || graph.op(pid) != Op::kParameter) {
    throw ConfigError("unknown parameter '" + std::string(parameter) + "'");
  }
  const NodeId outs[] = {output};
  graph.forward(feeds, outs);
  graph.backward(output);
  Tensor analytic = graph.grad(pid);
  Tensor& value = graph.parameter_value(parameter);
  if (analytic.size() != value.size()) analytic = Tensor(value.shape(), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double orig = value[i];
    value[i] = orig + step;
    graph.forward(feeds, outs);
    const double up = graph.value(output).item();
    value[i] = orig - step;
    graph.forward(feeds, outs);
    const double down = graph.value(output).item();
    value[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / (std::fabs(analytic[i]) + 1e-12));
  }
  graph.forward(feeds, outs);
  return worst;
}

}  // namespace lcrreg::ad
