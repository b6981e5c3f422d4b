#include "creep/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "creep/error.hpp"

namespace creep {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_str(shape) + " needs " +
                                              std::to_string(shape_numel(shape)) + " values, got " +
                                              std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw Error(ErrorKind::InvalidArgument, "use of an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error(ErrorKind::ShapeMismatch, "axis " + std::to_string(axis) + " out of range for shape " +
                                              shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  }
  return node().value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw Error(ErrorKind::ShapeMismatch, "index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (const auto i : index) {
    if (i >= s[axis]) throw Error(ErrorKind::ShapeMismatch, "index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().value[flat];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  node().requires_grad = flag;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad() const {
  const auto& n = node();
  if (n.grad.size() != n.value.size()) return Tensor(n.shape, T{0});
  return Tensor(n.shape, n.grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = node();
  std::fill(n.grad.begin(), n.grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node().shape, node().value);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(const detail::Node<T>&)> backward_fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward_fn);
      node->parents.reserve(inputs.size());
      for (const auto& t : inputs) {
        if (t.requires_grad()) node->parents.push_back(t.node_ptr());
      }
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw Error(ErrorKind::NonScalarLoss, "backward() needs a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  using Node = detail::Node<T>;
  // Iterative post-order DFS; reversing it yields a reverse topological order
  // in which each node runs exactly once after all of its consumers.
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_ptr().get(), 0);
  visited.insert(loss.node_ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), T{0});
  }
  loss.node_ptr()->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

template <typename T>
std::vector<Tensor<T>> gradients(const Tensor<T>& loss, const std::vector<Tensor<T>>& wrt) {
  for (auto t : wrt) t.zero_grad();
  backward(loss);
  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) out.push_back(t.grad());
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(const detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(const detail::Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::vector<Tensor<float>> gradients(const Tensor<float>&, const std::vector<Tensor<float>>&);
template std::vector<Tensor<double>> gradients(const Tensor<double>&, const std::vector<Tensor<double>>&);

}  // namespace creep
