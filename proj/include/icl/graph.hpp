#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "icl/tensor.hpp"

namespace icl::numerics {

using NodeId = std::int32_t;

enum class OpKind {
  kLeaf,
  kMatmul,       // 2D x 2D, optional operand transposes
  kBatchMatmul,  // 3D x 3D with shared leading dim
  kAdd,          // same shape, or b broadcast over trailing dim
  kAddTiled,     // a: (B*T, C) plus row-block b: (T, C) repeated B times
  kSub,          // same shape
  kMul,          // elementwise, same shape
  kScale,        // alpha * a
  kSoftmax,      // softmax over the trailing dim
  kCausalSoftmax,  // (N, T, T): row t normalized over columns 0..t
  kLayerNorm,    // trailing-dim normalization with affine gamma/beta
  kGelu,
  kReshape,
  kPermute,
  kSliceCols,  // 2D column range
  kSliceRows,  // 2D row range
  kReduceSum,  // -> rank-0 scalar
  kReduceMean,
};

// Eager reverse-mode autodiff tape. Nodes are appended in topological
// order (parents always precede children); values are computed at
// construction. backward() accumulates gradients for leaves registered
// as parameters.
class Graph {
 public:
  struct Node {
    OpKind kind;
    NodeId parents[3] = {-1, -1, -1};
    int n_parents = 0;
    Tensor value;
    bool is_param = false;
    // op attributes (only the relevant ones are set per kind)
    bool trans_a = false, trans_b = false;
    double alpha = 0.0;  // kScale factor, kLayerNorm eps
    std::int64_t start = 0, count = 0;  // slices
    std::vector<int> axes;              // kPermute
    std::vector<double> aux;            // kGelu: cached tanh values
  };

  NodeId input(Tensor value);
  NodeId parameter(Tensor value);

  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
  NodeId batch_matmul(NodeId a, NodeId b, bool trans_a = false,
                      bool trans_b = false);
  NodeId add(NodeId a, NodeId b);
  NodeId add_tiled(NodeId a, NodeId row_block);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double alpha);
  NodeId softmax(NodeId a);
  NodeId causal_softmax(NodeId scores);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId gelu(NodeId x);
  NodeId reshape(NodeId x, Shape shape);
  NodeId permute(NodeId x, std::vector<int> axes);
  NodeId slice_cols(NodeId x, std::int64_t start, std::int64_t count);
  NodeId slice_rows(NodeId x, std::int64_t start, std::int64_t count);
  NodeId reduce_sum(NodeId x);
  NodeId reduce_mean(NodeId x);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const Node& node(NodeId id) const;
  size_t node_count() const { return nodes_.size(); }

  // Gradient of a scalar-valued node with respect to every parameter
  // leaf. Parameters not reached by the backward sweep map to zeros of
  // their shape; non-parameter leaves are absent.
  std::unordered_map<NodeId, Tensor> backward(NodeId loss) const;

 private:
  NodeId push(Node n);
  std::vector<Node> nodes_;
};

// GELU (tanh approximation) and its derivative, shared with tests.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace icl::numerics
