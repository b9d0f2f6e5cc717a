#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "bvlab/grad/tensor.hpp"

namespace bvlab::grad {

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class Op {
  input,
  add,
  sub,
  mul,
  scale,
  matmul,
  add_row,
  relu,
  sigmoid,
  log_softmax,
  square,
  sum,
  mean,
  pick,
};

const char* op_name(Op op);

using Bindings = std::map<NodeId, Tensor>;

// A recorded computation over dense tensors with reverse-mode
// differentiation. Nodes are appended in construction order, which is
// a topological order since every operand must already exist.
//
// Usage: declare inputs, compose ops, then forward() with every input
// bound, then backward() from any node. Shapes are resolved at forward
// time; a mismatch raises ShapeError naming the node.
class Graph {
 public:
  NodeId input(std::string name);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  // [n,k]x[k,m] -> [n,m]; [n,k]x[k] -> [n]; [k]x[k,m] -> [m].
  NodeId matmul(NodeId a, NodeId b);
  // Adds a length-m bias to every row of an [n,m] operand.
  NodeId add_row(NodeId a, NodeId bias);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  // Row-wise, max-shifted.
  NodeId log_softmax(NodeId a);
  NodeId square(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Row r of an [n,c] operand -> element (r, columns[r]); result is [n].
  NodeId pick(NodeId a, std::vector<std::size_t> columns);

  void set_name(NodeId node, std::string name);

  // Evaluates every node; returns the value of the last node added.
  const Tensor& forward(const Bindings& inputs);

  // Reverse sweep seeded with `seed` at `output`. Returns the adjoints of
  // all input (root) nodes.
  Bindings backward(NodeId output, const Tensor& seed);
  // Convenience for scalar outputs: seed = 1.
  Bindings backward(NodeId output);

  const Tensor& value(NodeId node) const;
  const Tensor& adjoint(NodeId node) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool has_forward() const noexcept { return forward_done_; }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> operands;
    std::string name;
    double factor = 1.0;
    std::vector<std::size_t> columns;
    Tensor value;
    Tensor adjoint;
  };

  NodeId push(Op op, std::vector<std::size_t> operands);
  void check(NodeId id) const;
  std::string describe(std::size_t index) const;
  void evaluate(std::size_t index);
  void propagate(std::size_t index);

  std::vector<Node> nodes_;
  bool forward_done_ = false;
  bool backward_done_ = false;
};

}  // namespace bvlab::grad
