#include "bvlab/grad/graph.hpp"

#include <algorithm>
#include <cmath>

#include "bvlab/common/error.hpp"

namespace bvlab::grad {

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::add_row: return "add_row";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::log_softmax: return "log_softmax";
    case Op::square: return "square";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::pick: return "pick";
  }
  return "unknown";
}

namespace {

struct MatView {
  std::size_t rows;
  std::size_t cols;
};

MatView left_view(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  return {t.shape()[0], t.shape()[1]};
}

MatView right_view(const Tensor& t) {
  if (t.rank() == 1) return {t.shape()[0], 1};
  return {t.shape()[0], t.shape()[1]};
}

// out[n,m] += a[n,k] * b[k,m]
void gemm_nn(const double* a, const double* b, double* out, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = out + i * m;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const double* b_row = b + p * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += av * b_row[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodeId Graph::push(Op op, std::vector<std::size_t> operands) {
  for (std::size_t operand : operands) check(NodeId{operand});
  Node node;
  node.op = op;
  node.operands = std::move(operands);
  nodes_.push_back(std::move(node));
  forward_done_ = false;
  backward_done_ = false;
  return NodeId{nodes_.size() - 1};
}

void Graph::check(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw UsageError("node #" + std::to_string(id.index) + " does not belong to this graph");
  }
}

std::string Graph::describe(std::size_t index) const {
  const Node& node = nodes_[index];
  std::string out = "node #" + std::to_string(index) + " (" + op_name(node.op);
  if (!node.name.empty()) out += " '" + node.name + "'";
  return out + ")";
}

NodeId Graph::input(std::string name) {
  const NodeId id = push(Op::input, {});
  nodes_[id.index].name = std::move(name);
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Op::add, {a.index, b.index}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Op::sub, {a.index, b.index}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Op::mul, {a.index, b.index}); }

NodeId Graph::scale(NodeId a, double factor) {
  const NodeId id = push(Op::scale, {a.index});
  nodes_[id.index].factor = factor;
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) { return push(Op::matmul, {a.index, b.index}); }
NodeId Graph::add_row(NodeId a, NodeId bias) { return push(Op::add_row, {a.index, bias.index}); }
NodeId Graph::relu(NodeId a) { return push(Op::relu, {a.index}); }
NodeId Graph::sigmoid(NodeId a) { return push(Op::sigmoid, {a.index}); }
NodeId Graph::log_softmax(NodeId a) { return push(Op::log_softmax, {a.index}); }
NodeId Graph::square(NodeId a) { return push(Op::square, {a.index}); }
NodeId Graph::sum(NodeId a) { return push(Op::sum, {a.index}); }
NodeId Graph::mean(NodeId a) { return push(Op::mean, {a.index}); }

NodeId Graph::pick(NodeId a, std::vector<std::size_t> columns) {
  const NodeId id = push(Op::pick, {a.index});
  nodes_[id.index].columns = std::move(columns);
  return id;
}

void Graph::set_name(NodeId node, std::string name) {
  check(node);
  nodes_[node.index].name = std::move(name);
}

const Tensor& Graph::forward(const Bindings& inputs) {
  if (nodes_.empty()) throw UsageError("forward on an empty graph");
  for (const auto& [id, tensor] : inputs) {
    check(id);
    if (nodes_[id.index].op != Op::input) {
      throw UsageError(describe(id.index) + " is not an input and cannot be bound");
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (node.op == Op::input) {
      const auto it = inputs.find(NodeId{i});
      if (it == inputs.end()) throw UsageError(describe(i) + " is not bound");
      node.value = it->second;
    } else {
      evaluate(i);
    }
  }
  forward_done_ = true;
  backward_done_ = false;
  return nodes_.back().value;
}

void Graph::evaluate(std::size_t index) {
  Node& node = nodes_[index];
  const Tensor& a = nodes_[node.operands[0]].value;
  const auto require_same = [&](const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) {
      throw ShapeError(describe(index) + ": operand shapes " + shape_string(x.shape()) + " and " +
                       shape_string(y.shape()) + " differ");
    }
  };

  switch (node.op) {
    case Op::input:
      break;
    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Tensor& b = nodes_[node.operands[1]].value;
      require_same(a, b);
      Tensor out = a;
      auto o = out.values();
      auto bv = b.values();
      if (node.op == Op::add) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
      } else if (node.op == Op::sub) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
      }
      node.value = std::move(out);
      break;
    }
    case Op::scale: {
      Tensor out = a;
      for (double& v : out.values()) v *= node.factor;
      node.value = std::move(out);
      break;
    }
    case Op::matmul: {
      const Tensor& b = nodes_[node.operands[1]].value;
      if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
        throw ShapeError(describe(index) + ": matmul needs rank-1 or rank-2 operands, got " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
      }
      const MatView av = left_view(a);
      const MatView bv = right_view(b);
      if (av.cols != bv.rows) {
        throw ShapeError(describe(index) + ": inner dimensions of " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()) + " differ");
      }
      Shape shape;
      if (a.rank() == 2) shape.push_back(av.rows);
      if (b.rank() == 2) shape.push_back(bv.cols);
      Tensor out = Tensor::zeros(shape);
      gemm_nn(a.values().data(), b.values().data(), out.values().data(), av.rows, av.cols,
              bv.cols);
      node.value = std::move(out);
      break;
    }
    case Op::add_row: {
      const Tensor& bias = nodes_[node.operands[1]].value;
      if (bias.rank() != 1 || a.cols() != bias.size() || a.rank() < 1) {
        throw ShapeError(describe(index) + ": cannot add bias " + shape_string(bias.shape()) +
                         " to rows of " + shape_string(a.shape()));
      }
      Tensor out = a;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
      }
      node.value = std::move(out);
      break;
    }
    case Op::relu: {
      Tensor out = a;
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      node.value = std::move(out);
      break;
    }
    case Op::sigmoid: {
      Tensor out = a;
      for (double& v : out.values()) v = stable_sigmoid(v);
      node.value = std::move(out);
      break;
    }
    case Op::log_softmax: {
      if (a.rank() < 1) throw ShapeError(describe(index) + ": log_softmax of a scalar");
      Tensor out = a;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const auto top = std::max_element(row.begin(), row.end());
        const double peak = *top;
        double rest = 0.0;
        for (auto it = row.begin(); it != row.end(); ++it) {
          if (it != top) rest += std::exp(*it - peak);
        }
        const double lse = peak + std::log1p(rest);
        for (double& v : row) v -= lse;
      }
      node.value = std::move(out);
      break;
    }
    case Op::square: {
      Tensor out = a;
      for (double& v : out.values()) v *= v;
      node.value = std::move(out);
      break;
    }
    case Op::sum:
    case Op::mean: {
      double total = 0.0;
      for (double v : a.values()) total += v;
      if (node.op == Op::mean) total /= static_cast<double>(a.size());
      node.value = Tensor::scalar(total);
      break;
    }
    case Op::pick: {
      if (a.rank() != 2 || node.columns.size() != a.rows()) {
        throw ShapeError(describe(index) + ": pick needs [n,c] operand with n columns indices, got " +
                         shape_string(a.shape()) + " and " + std::to_string(node.columns.size()) +
                         " indices");
      }
      std::vector<double> out(a.rows());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (node.columns[r] >= a.cols()) {
          throw ShapeError(describe(index) + ": column " + std::to_string(node.columns[r]) +
                           " out of range for " + shape_string(a.shape()));
        }
        out[r] = a.at(r, node.columns[r]);
      }
      node.value = Tensor::vector(std::move(out));
      break;
    }
  }
}

Bindings Graph::backward(NodeId output) { return backward(output, Tensor::scalar(1.0)); }

Bindings Graph::backward(NodeId output, const Tensor& seed) {
  check(output);
  if (!forward_done_) throw UsageError("backward called before forward");
  const Tensor& out_value = nodes_[output.index].value;
  if (seed.shape() != out_value.shape()) {
    throw ShapeError("backward seed shape " + shape_string(seed.shape()) + " does not match " +
                     describe(output.index) + " of shape " + shape_string(out_value.shape()));
  }
  for (Node& node : nodes_) node.adjoint = Tensor::zeros(node.value.shape());
  nodes_[output.index].adjoint = seed;
  for (std::size_t i = output.index + 1; i-- > 0;) propagate(i);
  backward_done_ = true;

  Bindings roots;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::input) roots.emplace(NodeId{i}, nodes_[i].adjoint);
  }
  return roots;
}

void Graph::propagate(std::size_t index) {
  Node& node = nodes_[index];
  if (node.op == Op::input) return;
  const Tensor& grad = node.adjoint;
  const auto g = grad.values();
  Tensor& da = nodes_[node.operands[0]].adjoint;
  const Tensor& a = nodes_[node.operands[0]].value;

  switch (node.op) {
    case Op::input:
      break;
    case Op::add:
    case Op::sub: {
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += g[i];
      auto b_adj = nodes_[node.operands[1]].adjoint.values();
      const double s = node.op == Op::add ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) b_adj[i] += s * g[i];
      break;
    }
    case Op::mul: {
      const auto av = a.values();
      const auto bv = nodes_[node.operands[1]].value.values();
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += g[i] * bv[i];
      auto b_adj = nodes_[node.operands[1]].adjoint.values();
      for (std::size_t i = 0; i < g.size(); ++i) b_adj[i] += g[i] * av[i];
      break;
    }
    case Op::scale: {
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += node.factor * g[i];
      break;
    }
    case Op::matmul: {
      const Tensor& b = nodes_[node.operands[1]].value;
      Tensor& db = nodes_[node.operands[1]].adjoint;
      const MatView av = left_view(a);
      const MatView bv = right_view(b);
      const std::size_t n = av.rows, k = av.cols, m = bv.cols;
      const double* A = a.values().data();
      const double* B = b.values().data();
      double* dA = da.values().data();
      double* dB = db.values().data();
      const double* G = g.data();
      // dA[n,k] += G[n,m] B^T ; dB[k,m] += A^T G
      for (std::size_t i = 0; i < n; ++i) {
        const double* g_row = G + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double* b_row = B + p * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g_row[j] * b_row[j];
          dA[i * k + p] += acc;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double* g_row = G + i * m;
        const double* a_row = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double av_ip = a_row[p];
          if (av_ip == 0.0) continue;
          double* db_row = dB + p * m;
          for (std::size_t j = 0; j < m; ++j) db_row[j] += av_ip * g_row[j];
        }
      }
      break;
    }
    case Op::add_row: {
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += g[i];
      auto b_adj = nodes_[node.operands[1]].adjoint.values();
      const std::size_t cols = b_adj.size();
      for (std::size_t i = 0; i < g.size(); ++i) b_adj[i % cols] += g[i];
      break;
    }
    case Op::relu: {
      const auto av = a.values();
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av[i] > 0.0) a_adj[i] += g[i];
      }
      break;
    }
    case Op::sigmoid: {
      const auto sv = node.value.values();
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += g[i] * sv[i] * (1.0 - sv[i]);
      break;
    }
    case Op::log_softmax: {
      const std::size_t rows = node.value.rows();
      const std::size_t cols = node.value.cols();
      const auto y = node.value.values();
      auto a_adj = da.values();
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          a_adj[i] += g[i] - std::exp(y[i]) * total;
        }
      }
      break;
    }
    case Op::square: {
      const auto av = a.values();
      auto a_adj = da.values();
      for (std::size_t i = 0; i < g.size(); ++i) a_adj[i] += 2.0 * av[i] * g[i];
      break;
    }
    case Op::sum:
    case Op::mean: {
      const double scale =
          node.op == Op::mean ? g[0] / static_cast<double>(a.size()) : g[0];
      for (double& v : da.values()) v += scale;
      break;
    }
    case Op::pick: {
      for (std::size_t r = 0; r < node.columns.size(); ++r) {
        da.at(r, node.columns[r]) += g[r];
      }
      break;
    }
  }
}

const Tensor& Graph::value(NodeId node) const {
  check(node);
  if (!forward_done_) throw UsageError("value() requested before forward");
  return nodes_[node.index].value;
}

const Tensor& Graph::adjoint(NodeId node) const {
  check(node);
  if (!backward_done_) throw UsageError("adjoint() requested before backward");
  return nodes_[node.index].adjoint;
}

}  // namespace bvlab::grad
