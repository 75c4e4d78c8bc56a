#include "clef/numerics/graph.hpp"

#include <cassert>
#include <cmath>

#include "clef/error.hpp"

namespace clef::num {

const Tensor& Var::value() const { return graph->value(id); }
Tensor& Var::tensor() const { return graph->tensor(id); }
bool Var::requires_grad() const { return graph->requires_grad(id); }

float Var::item() const {
  const auto& t = value();
  if (t.size() != 1) fail(ErrorKind::NotScalar, "item() on tensor " + shape_string(t.shape));
  return t.values[0];
}

Var Graph::leaf(Tensor& t) {
  Node n;
  n.data = &t;
  n.is_leaf = true;
  n.requires_grad = t.requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor t) { return input(std::move(t), false); }

Var Graph::input(Tensor t, bool requires_grad) {
  Node n;
  n.owned = std::make_unique<Tensor>(std::move(t));
  n.owned->requires_grad = requires_grad;
  n.data = n.owned.get();
  n.is_leaf = true;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::push(Tensor out, std::vector<int> inputs, BackwardFn backward) {
#ifndef NDEBUG
  for (float v : out.values) assert(std::isfinite(v));
#endif
  Node n;
  n.owned = std::make_unique<Tensor>(std::move(out));
  n.data = n.owned.get();
  for (int in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var loss) {
  if (loss.graph != this) fail(ErrorKind::ShapeMismatch, "loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    fail(ErrorKind::NotScalar, "backward from tensor " + shape_string(value(loss.id).shape));
  }
  visit_order_.clear();
  if (!nodes_[loss.id].requires_grad) return;

  for (auto& n : nodes_) {
    if (!n.is_leaf) n.data->zero_grad();
  }
  grad(loss.id)[0] += 1.0f;

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.data->has_grad()) continue;
    visit_order_.push_back(i);
    if (n.backward) n.backward(*this, i);
  }
}

void backward(Var loss) { loss.graph->backward(loss); }

}  // namespace clef::num
