#ifndef SSLFORGE_TENSOR_TENSOR_H_
#define SSLFORGE_TENSOR_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sslforge {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode tape. Values are written once at creation;
// only `grad` and `backward_done` change afterwards.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Scatters this node's grad into the grads of its parents.
  std::function<void(Node&)> backprop;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major double tensor with an optional tape node.
//
// A Tensor is a cheap handle: copies share the node. The forward value is
// immutable; operations always produce new tensors. Leaves created with
// `parameter` (or `with_grad`) accumulate gradients when `backward` runs on a
// scalar that depends on them.
class Tensor {
 public:
  // 0-element tensor of shape {0}.
  Tensor();
  // Constant (untracked) tensor. Throws DimensionError if sizes disagree.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor eye(std::size_t n);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  // Leaf that records gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const;
  // Matrix accessors; throw DimensionError for rank != 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  const std::vector<double>& vec() const { return node_->value; }
  double operator[](std::size_t flat) const { return node_->value[flat]; }
  double at(std::size_t i, std::size_t j) const;
  // Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Accumulated gradient; zeros if backward never reached this tensor.
  std::vector<double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad() const;

  // Same value, no tape history, no gradient.
  Tensor detach() const;
  // Fresh leaf with the same value that records gradients.
  Tensor with_grad() const;
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every leaf
// that requires them. Calling twice on the same root without
// `reset_backward` throws ContractError.
void backward(const Tensor& loss);

// Vector-Jacobian product: seeds `output` with `seed` (same shape) instead of
// a unit scalar.
void backward(const Tensor& output, const Tensor& seed);

// Clears the done flag on `root` and the gradients of every node reachable
// from it (leaves included).
void reset_backward(const Tensor& root);

namespace detail {

// Builds an op result. Parents and the backprop closure are recorded only if
// some parent requires grad.
Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backprop);

}  // namespace detail

}  // namespace sslforge

#endif  // SSLFORGE_TENSOR_TENSOR_H_
