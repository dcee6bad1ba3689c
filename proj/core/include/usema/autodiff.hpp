#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "usema/tensor.hpp"

namespace usema {

// One recorded operation: the GradRecord of the define-by-run tape.
template <typename T>
struct Node : std::enable_shared_from_this<Node<T>> {
  std::uint64_t id = 0;
  const char* op = "leaf";
  Tensor<T> value;
  Tensor<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor<T>& g);
  void accumulate(Tensor<T>&& g);
  // Returns the grad buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer();
};

// Handle to a tape node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::uint64_t id() const { return node_->id; }
  const char* op() const { return node_->op; }

  void zero_grad() { node_->grad = Tensor<T>(); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  static Var from_node(std::shared_ptr<Node<T>> node);

 private:
  std::shared_ptr<Node<T>> node_;
};

// True unless a NoGradGuard is alive on this thread.
bool grad_enabled() noexcept;

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Digest of the branches taken by piecewise-linear ops (the sign of every
// leaky_relu input) while a BranchTrace is alive on this thread. Two
// evaluations with equal digests lie on the same smooth piece.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  // The innermost live trace, or null.
  static BranchTrace* current() noexcept;
  void mix(std::uint64_t word) noexcept;

 private:
  std::uint64_t digest_ = 0x84222325CBF29CE4ULL;
  BranchTrace* previous_;
};

// Creates a result node. When recording is off, or no parent requires grad,
// the result is a constant and `backward` is dropped.
template <typename T>
Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
              std::function<void(Node<T>&)> backward);

// Nodes reachable from `root`, ordered so that every node appears after all of
// its parents. Only nodes that require grad are listed.
template <typename T>
std::vector<Node<T>*> topological_tape(const Var<T>& root);

// Reverse sweep from a scalar root: seeds d(root)=1 and visits each tape node
// exactly once, children before parents. Interior nodes release their closures
// afterwards; leaf grads persist until zero_grad().
template <typename T>
void backward(const Var<T>& root);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Var<float>;
extern template class Var<double>;

}  // namespace usema
