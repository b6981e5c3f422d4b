#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace creep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Gradient recording is on by default; NoGradGuard turns it off for the
/// current thread until the guard is destroyed.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// One vertex of the dynamic graph. `backward` reads `grad` (dLoss/dvalue) and
/// accumulates into the parents it captured.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward;

  bool is_leaf() const noexcept { return !backward; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{});
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor participating in reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same buffer, which is what
/// lets models and optimizers hold the same parameters. Operations never
/// mutate their inputs; they allocate a fresh result and, if any input
/// requires a gradient, record a backward rule on the result.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return node().value.size(); }

  std::span<const T> data() const { return node().value; }
  /// Writes bypass the graph; meant for parameter updates and test fixtures.
  std::span<T> mutable_data() { return node().value; }
  const std::vector<T>& values() const { return node().value; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return defined() && node_->requires_grad; }
  Tensor& set_requires_grad(bool flag = true);
  bool is_leaf() const { return node().is_leaf(); }

  /// Accumulated gradient; zeros when nothing has flowed into this tensor.
  Tensor grad() const;
  void zero_grad();

  /// Copy of the value with no graph history.
  Tensor detach() const;

  const NodePtr& node_ptr() const noexcept { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  detail::Node<T>& node() const;

  NodePtr node_;
};

/// Builds the result of a differentiable operation. The graph edge is only
/// recorded when recording is enabled and some input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(const detail::Node<T>&)> backward);

/// Runs reverse-mode accumulation from a scalar. Gradients add into every
/// reachable leaf that requires one; intermediate gradients are recomputed on
/// each call. Throws NonScalarLoss for non-scalar input.
template <typename T>
void backward(const Tensor<T>& loss);

/// Zeroes the gradients of `wrt`, back-propagates `loss`, and returns the
/// gradient of each entry in order. Unreachable entries get zeros.
template <typename T>
std::vector<Tensor<T>> gradients(const Tensor<T>& loss, const std::vector<Tensor<T>>& wrt);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace creep
