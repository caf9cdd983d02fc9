#include "sslforge/tensor/tensor.h"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw DimensionError(fmt::format("shape {} holds {} values, got {}",
                                     shape_string(shape), numel(shape),
                                     values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}

// Reverse topological order of every node reachable from root that takes
// part in differentiation.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  // Iterative post-order DFS; the pair holds (node, next parent index).
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

void run_backward(const Tensor& root, std::vector<double> seed) {
  detail::Node* node = root.node().get();
  if (node->backward_done) {
    throw ContractError(
        "backward already ran on this root; call reset_backward first");
  }
  if (!node->requires_grad) {
    throw ContractError("backward on a tensor that is not connected to a tape");
  }
  const auto order = topo_order(node);
  // Intermediate grads start from zero for this sweep.
  for (detail::Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  auto& g = node->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (detail::Node* n : order) {
    if (n->backprop) n->backprop(*n);
  }
  node->backward_done = true;
}

}  // namespace

Tensor::Tensor() : node_(make_node(Shape{0}, {})) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(make_node(std::move(shape), std::move(values))) {}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError(fmt::format("axis {} out of range for shape {}", axis,
                                     shape_string(shape())));
  }
  return shape()[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
  }
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw DimensionError("expected a matrix, got shape " + shape_string(shape()));
  }
  return shape()[1];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->value[i * cols() + j];
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

Tensor Tensor::grad_tensor() const { return Tensor(shape(), grad()); }

void Tensor::zero_grad() const { node_->grad.clear(); }

Tensor Tensor::detach() const {
  // Shares no node: the copy is a plain constant.
  return Tensor(shape(), node_->value);
}

Tensor Tensor::with_grad() const { return parameter(shape(), node_->value); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (numel(new_shape) != size()) {
    throw DimensionError(fmt::format("cannot reshape {} to {}",
                                     shape_string(shape()),
                                     shape_string(new_shape)));
  }
  return detail::make_result(std::move(new_shape), node_->value, "reshape",
                             {*this}, [](detail::Node& self) {
                               auto& pg = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < pg.size(); ++i) {
                                 pg[i] += self.grad[i];
                               }
                             });
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  run_backward(loss, {1.0});
}

void backward(const Tensor& output, const Tensor& seed) {
  if (output.shape() != seed.shape()) {
    throw DimensionError(fmt::format("seed shape {} does not match output {}",
                                     shape_string(seed.shape()),
                                     shape_string(output.shape())));
  }
  run_backward(output, seed.vec());
}

void reset_backward(const Tensor& root) {
  detail::Node* node = root.node().get();
  node->backward_done = false;
  if (!node->requires_grad) return;
  for (detail::Node* n : topo_order(node)) n->grad.clear();
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backprop) {
  auto node = make_node(std::move(shape), std::move(value));
  node->op = op;
  node->is_leaf = false;
  const bool tracked = std::any_of(parents.begin(), parents.end(),
                                   [](const Tensor& p) { return p.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backprop = std::move(backprop);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

}  // namespace sslforge
