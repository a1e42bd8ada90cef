#include "robustsyn/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace robustsyn {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void check_finite(std::span<const real> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value in ") + where + " at index " +
                         std::to_string(i));
    }
  }
}

void TensorImpl::accumulate(std::span<const real> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0, requires_grad); }

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return from(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
  if (static_cast<std::size_t>(shape_numel(shape)) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from({1}, {value}, requires_grad); }

namespace {
const TensorImpl& deref(const std::shared_ptr<TensorImpl>& p) {
  if (!p) throw GraphError("use of undefined tensor");
  return *p;
}
}  // namespace

const Shape& Tensor::shape() const { return deref(impl_).shape; }

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(deref(impl_).data.size()); }

std::span<const real> Tensor::data() const { return deref(impl_).data; }

std::span<real> Tensor::mutable_data() {
  deref(impl_);
  return impl_->data;
}

real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return deref(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  deref(impl_);
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !deref(impl_).grad.empty(); }

std::span<const real> Tensor::grad() const { return deref(impl_).grad; }

std::span<real> Tensor::mutable_grad() {
  deref(impl_);
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  deref(impl_);
  impl_->grad.clear();
}

bool Tensor::is_leaf() const { return deref(impl_).grad_fn == nullptr; }

Tensor Tensor::detach() const {
  const auto& d = deref(impl_);
  return from(d.shape, d.data, false);
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  auto r = make_op_output("reshape", std::move(new_shape), impl_->data, {this});
  if (r.node) {
    TensorImpl* in = impl_.get();
    r.node->backward = [in](std::span<const real> g) { in->accumulate(g); };
  }
  return r.out;
}

OpResult make_op_output(const char* op, Shape shape, std::vector<real> data,
                        std::initializer_list<const Tensor*> inputs) {
  check_finite(data, op);
  bool needs_graph = false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) needs_graph = true;
  }
  Tensor out = Tensor::from(std::move(shape), std::move(data), needs_graph);
  if (!needs_graph) return {out, nullptr};
  auto node = std::make_shared<Node>();
  node->op = op;
  for (const Tensor* t : inputs) {
    if (t->defined()) node->inputs.push_back(t->impl());
  }
  Node* raw = node.get();
  out.impl()->grad_fn = std::move(node);
  return {out, raw};
}

void Tensor::backward() const {
  const auto& root = deref(impl_);
  if (root.data.size() != 1) {
    throw GraphError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
  }
  check_finite(root.data, "loss");
  if (!root.requires_grad) throw GraphError("backward() on a tensor that does not require grad");
  if (root.grad_fn && root.grad_fn->consumed) {
    throw GraphError("backward() called twice on the same graph; re-run the forward pass");
  }

  // Reverse topological order by iterative post-order DFS over tensors.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->grad_fn && next < t->grad_fn->inputs.size()) {
      TensorImpl* child = t->grad_fn->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  // Intermediate gradients are scratch; leaf gradients accumulate.
  for (TensorImpl* t : order) {
    if (t->grad_fn) t->grad.clear();
  }
  impl_->grad.assign(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->grad_fn) continue;
    Node& node = *t->grad_fn;
    if (node.consumed) throw GraphError("graph node '" + node.op + "' already consumed");
    if (!t->grad.empty() && node.backward) node.backward(t->grad);
    node.consumed = true;
    node.backward = nullptr;
    t->grad.clear();
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (TensorImpl* t : order) {
    if (t->grad_fn) nodes.push_back(t->grad_fn);
    else check_finite(t->grad, "gradient");
  }
  // Release saved inputs; the consumed nodes stay attached so a repeated
  // backward() is reported instead of silently returning zeros.
  for (auto& node : nodes) node->inputs.clear();
}

}  // namespace robustsyn
