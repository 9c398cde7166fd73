#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmr/tensor.hpp"

namespace mmr {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  kLeaf,
  kAffine,
  kConv2d,
  kConv1d,
  kEmbedding,
  kLeakyRelu,
  kSigmoid,
  kMeanPool,
  kConcat,
  kAdd,
  kScale,
  kMaskMul,
  kGate,
  kGradReverse,
  kReshape,
  kSum,
  kSoftmaxCrossEntropy,
};

const char* op_name(Op op) noexcept;

// Eager reverse-mode tape. Every builder call computes its forward value
// immediately and appends a node, so node ids are topologically ordered by
// construction. Borrowed leaves (param()) must outlive the graph; the graph
// never writes to them, so one parameter set can back many graphs on many
// threads at once.
class Graph {
 public:
  NodeId input(Tensor value, bool requires_grad = false);
  NodeId param(const Tensor& value, bool requires_grad = true);

  // x[n x d] * W[d x k] + b[k]
  NodeId affine(NodeId x, NodeId w, NodeId b);
  // Valid 3x3 cross-correlation, stride 1: x[c x h x w], k[o x c x 3 x 3],
  // optional bias[o] -> [o x (h-2) x (w-2)].
  NodeId conv2d(NodeId x, NodeId kernels, std::optional<NodeId> bias = {});
  // Width-3 convolution over a sequence with zero padding of one on each
  // side: x[L x e], k[3 x e x f], bias[f] -> [L x f].
  NodeId conv1d(NodeId x, NodeId kernels, NodeId bias);
  // table[V x e] gathered at `indices` -> [L x e].
  NodeId embedding(NodeId table, std::vector<int> indices);
  NodeId leaky_relu(NodeId x, float slope);
  NodeId sigmoid(NodeId x);
  // Mean over rows: [L x f] -> [1 x f].
  NodeId mean_pool(NodeId x);
  // Concatenate along the last axis of two [r x *] tensors.
  NodeId concat(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, float factor);
  // Elementwise product with a constant tensor (dropout masks).
  NodeId mask_mul(NodeId x, Tensor mask);
  // alpha (one element) times x.
  NodeId gate(NodeId alpha, NodeId x);
  // Identity forward; backward multiplies the incoming gradient by -lambda.
  NodeId grad_reverse(NodeId x, float lambda);
  NodeId reshape(NodeId x, Shape shape);
  NodeId sum(NodeId x);
  // Mean softmax cross-entropy of logits[n x C] against labels in [0, C).
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

  void set_loss(NodeId id);
  std::optional<NodeId> loss() const noexcept { return loss_; }

  // Backpropagates from the designated loss node. Fills a gradient buffer for
  // every node that depends on a requires_grad leaf; may be called again after
  // set_loss() selects another node (buffers are reset first).
  void backward();

  const Tensor& value(NodeId id) const;
  std::span<const float> grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::span<const NodeId> inputs(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<NodeId, 3> in{};
    std::uint8_t n_in = 0;
    Tensor own;
    const Tensor* ext = nullptr;
    std::vector<float> grad;
    bool requires_grad = false;
    float attr = 0.0f;
    std::vector<int> ints;
    std::vector<float> aux;

    const Tensor& value() const noexcept { return ext ? *ext : own; }
  };

  NodeId push(Node node);
  Node make(Op op, std::initializer_list<NodeId> ins) const;
  const Tensor& val(NodeId id) const { return nodes_[id].value(); }
  void check_id(NodeId id) const;
  void backprop(const Node& n);

  std::vector<Node> nodes_;
  std::optional<NodeId> loss_;
  bool backward_done_ = false;
};

}  // namespace mmr
