#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "seqgrad/tensor.hpp"

namespace seqgrad {

/// Opaque handle to a value recorded on a Tape.
struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kTanh,
  kSigmoid,
  kLogSoftmax,  // subtract-max log-sum-exp form
  kGather,      // vector -> scalar at index
  kRow,         // matrix -> row vector
  kSum,         // tensor -> scalar
  kWeightedSum, // scalars -> scalar
};

std::string_view op_name(Op op);

class Tape;

/// Result of a backward pass: d(root)/d(node) for every node on the tape.
/// Nodes the root does not depend on report a zero tensor of their shape.
class Gradients {
 public:
  const Tensor& of(NodeId id) const;
  /// The root's own gradient (always 1).
  NodeId root() const { return root_; }

 private:
  friend class Tape;
  Gradients(const Tape& tape, std::vector<Tensor> grads, NodeId root);

  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
  mutable std::vector<Tensor> zeros_;
  NodeId root_;
};

/// Append-only record of primitive operations. Node ids are dense and every
/// operation's inputs precede it, so reverse index order is a valid
/// topological order for backward.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Differentiable input (a parameter).
  NodeId leaf(Tensor value);
  /// Non-differentiable input; backward does not propagate into it.
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  /// Same-shape add, or matrix [m,n] + row vector [n].
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId log_softmax(NodeId a);
  NodeId gather(NodeId a, std::size_t index);
  NodeId row(NodeId a, std::size_t index);
  NodeId sum(NodeId a);
  NodeId weighted_sum(std::span<const NodeId> scalars, std::span<const double> weights);

  const Tensor& value(NodeId id) const { return nodes_[id.index].value; }
  Op op(NodeId id) const { return nodes_[id.index].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode pass from a scalar root. Each node at or before the root is
  /// visited once, in reverse record order.
  Gradients backward(NodeId root) const;

 private:
  struct Node {
    Op op;
    bool needs_grad;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::size_t index = 0;
    double factor = 0.0;
    Tensor value{};
    std::vector<std::uint32_t> many{};
    std::vector<double> weights{};
  };

  const Node& node(NodeId id) const;
  NodeId push(Node n);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
};

}  // namespace seqgrad
