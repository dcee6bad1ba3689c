#include "usema/autodiff.hpp"

#include <atomic>
#include <unordered_set>

namespace usema {
namespace {

thread_local bool g_grad_enabled = true;
thread_local BranchTrace* g_branch_trace = nullptr;
std::atomic<std::uint64_t> g_next_id{1};

}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

BranchTrace::BranchTrace() : previous_(g_branch_trace) { g_branch_trace = this; }
BranchTrace::~BranchTrace() { g_branch_trace = previous_; }
BranchTrace* BranchTrace::current() noexcept { return g_branch_trace; }

void BranchTrace::mix(std::uint64_t word) noexcept {
  digest_ = (digest_ ^ word) * 0x100000001B3ULL;
  digest_ ^= digest_ >> 29;
}

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    require_same_shape(value.shape(), g.shape(), "gradient accumulation");
    grad = g;
    return;
  }
  require_same_shape(grad.shape(), g.shape(), "gradient accumulation");
  T* dst = grad.ptr();
  const T* src = g.ptr();
  for (std::int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
}

template <typename T>
void Node<T>::accumulate(Tensor<T>&& g) {
  if (grad.empty()) {
    require_same_shape(value.shape(), g.shape(), "gradient accumulation");
    grad = std::move(g);
    return;
  }
  accumulate(static_cast<const Tensor<T>&>(g));
}

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Var<T> Var<T>::from_node(std::shared_ptr<Node<T>> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

template <typename T>
Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
              std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (g_grad_enabled && any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward);
  }
  return Var<T>::from_node(std::move(node));
}

template <typename T>
std::vector<Node<T>*> topological_tape(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.requires_grad()) return order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; deep networks would overflow a recursive walk.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.value().numel() != 1) {
    throw DimensionError("backward expects a scalar root, got shape " +
                         shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;
  const auto order = topological_tape(root);
  // Hold every node while sweeping; releasing closures drops parent links.
  std::vector<std::shared_ptr<Node<T>>> tape;
  tape.reserve(order.size());
  for (Node<T>* n : order) tape.push_back(n->shared_from_this());
  root.node()->accumulate(Tensor<T>(root.shape(), T{1}));
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    Node<T>& node = **it;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
    if (!node.parents.empty()) {
      node.backward_fn = nullptr;
      node.parents.clear();
      node.grad = Tensor<T>();
    }
  }
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> record(const char*, Tensor<float>, std::vector<Var<float>>,
                           std::function<void(Node<float>&)>);
template Var<double> record(const char*, Tensor<double>, std::vector<Var<double>>,
                            std::function<void(Node<double>&)>);
template std::vector<Node<float>*> topological_tape(const Var<float>&);
template std::vector<Node<double>*> topological_tape(const Var<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace usema
