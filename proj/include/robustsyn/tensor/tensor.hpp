#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "robustsyn/common.hpp"

namespace robustsyn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// A recorded operation: holds its inputs and a closure that maps the output
// gradient onto input gradients. Nodes only point upstream, so graphs are
// acyclic in ownership as well as in data flow.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const real> grad_out)> backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  void accumulate(std::span<const real> g);
};

// Dense row-major tensor handle. Copies share storage; use clone() for a deep
// copy. A graph and its tensors belong to one thread at a time; leaves with
// requires_grad == false may be read concurrently by many graphs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t numel() const;

  std::span<const real> data() const;
  // Writable view for leaves; mutating a tensor that feeds a live graph
  // invalidates that graph's gradients.
  std::span<real> mutable_data();
  real item() const;
  real at(std::int64_t flat_index) const { return data()[static_cast<std::size_t>(flat_index)]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();
  bool is_leaf() const;

  // Copy of the values with no graph attached.
  Tensor detach() const;
  Tensor clone() const { return detach(); }
  Tensor reshape(Shape shape) const;

  // Reverse-mode sweep from this scalar. Consumes the graph: a second call
  // without a fresh forward pass throws GraphError.
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Builds an op output. When any input requires grad the output is attached to
// a new Node whose backward closure is installed by the caller via the
// returned pointer (null when no graph is recorded).
struct OpResult {
  Tensor out;
  Node* node = nullptr;
};
OpResult make_op_output(const char* op, Shape shape, std::vector<real> data,
                        std::initializer_list<const Tensor*> inputs);

// Throws NumericError naming `where` if any value is NaN/Inf.
void check_finite(std::span<const real> values, const char* where);

}  // namespace robustsyn
