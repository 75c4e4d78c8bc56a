#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "clef/numerics/tensor.hpp"

namespace clef::num {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  Tensor& tensor() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  float item() const;
  bool requires_grad() const;
};

// The computation record. Nodes are appended in execution order, so the
// node index is a topological order and backward simply walks it in reverse.
// Leaves created with `leaf` alias caller-owned tensors (parameters); their
// gradients accumulate across backward calls until the caller clears them.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Caller-owned tensor; must outlive the graph.
  Var leaf(Tensor& t);
  // Graph-owned tensor without gradient.
  Var constant(Tensor t);
  // Graph-owned leaf that may track a gradient.
  Var input(Tensor t, bool requires_grad);

  Var push(Tensor out, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return *nodes_[id].data; }
  Tensor& tensor(int id) { return *nodes_[id].data; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated on first access.
  std::vector<float>& grad(int id) { return nodes_[id].data->ensure_grad(); }
  bool has_grad(int id) const { return nodes_[id].data->has_grad(); }

  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode sweep from a scalar node. Intermediate gradients are reset
  // on entry; leaf gradients accumulate.
  void backward(Var loss);

  // Order in which the last backward call visited nodes (for inspection).
  const std::vector<int>& last_visit_order() const { return visit_order_; }

 private:
  struct Node {
    Tensor* data = nullptr;
    std::unique_ptr<Tensor> owned;
    std::vector<int> inputs;
    BackwardFn backward;
    bool is_leaf = false;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<int> visit_order_;
};

// Free-function form of Graph::backward.
void backward(Var loss);

}  // namespace clef::num
