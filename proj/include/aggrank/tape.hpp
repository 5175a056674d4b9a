#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aggrank/params.hpp"
#include "aggrank/tensor.hpp"

namespace aggrank::nn {

using NodeId = std::int32_t;

// Reverse-mode accumulation over an explicit operation tape. Forward values
// are computed eagerly at node construction so that control flow (sampling,
// argmax) can branch on them while the graph is still being built. backward()
// replays the tape once in reverse; a consumed tape refuses further use.
class Tape {
 public:
  explicit Tape(const ParamStore* store);
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  NodeId input(Vec v);                 // constant, no gradient
  NodeId zeros(std::size_t len);       // constant zero vector
  NodeId param_vector(int param_id);   // rank-1 parameter leaf

  // Elementwise and linear algebra.
  NodeId matvec(int param_id, NodeId x);  // W x, W a rank-2 parameter
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId one_minus(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId scale_const(NodeId a, double c);
  NodeId scale(NodeId v, NodeId s);  // s scalar node

  // Reductions and distributions.
  NodeId dot(NodeId a, NodeId b);                   // scalar
  NodeId stack(std::span<const NodeId> scalars);    // scalars -> vector
  NodeId pick(NodeId v, std::size_t index);         // scalar v[index]
  NodeId softmax(NodeId scores);
  NodeId log_softmax(NodeId scores);
  NodeId squared_norm(NodeId v);                    // scalar sum of squares
  // y = sum_k weights[k] * v_k with v_k vector nodes of equal length.
  NodeId weighted_vector_sum(NodeId weights, std::span<const NodeId> vectors);
  // scalar = sum_k coeffs[k] * scalar_node_k, coeffs constant.
  NodeId weighted_sum(std::span<const NodeId> scalars, std::span<const double> coeffs);

  const Vec& value(NodeId id) const;
  double scalar(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds d(root)/d(root) = seed and accumulates parameter adjoints into
  // grads. root must be a scalar node. The tape is consumed afterwards.
  void backward(NodeId root, Gradients& grads, double seed = 1.0);

 private:
  enum class Op : std::uint8_t {
    kInput,
    kZeros,
    kParamVec,
    kMatVec,
    kAdd,
    kSub,
    kHadamard,
    kOneMinus,
    kSigmoid,
    kTanh,
    kConcat,
    kScaleConst,
    kScale,
    kDot,
    kStack,
    kPick,
    kSoftmax,
    kLogSoftmax,
    kSquaredNorm,
    kWeightedVecSum,
    kWeightedSum,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    int param = -1;
    std::size_t index = 0;
    double cval = 0.0;
    std::vector<NodeId> children;
    std::vector<double> coeffs;
    Vec value;
  };

  NodeId push(Node n);
  const Node& node(NodeId id) const;
  void check_alive() const;
  const Vec& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  const ParamStore* store_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace aggrank::nn
