#include "condflow/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace condflow {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) {
    if (e <= 0)
      throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(s));
    if (n > std::numeric_limits<std::int64_t>::max() / e)
      throw std::invalid_argument("tensor shape overflows: " + shape_str(s));
    n *= e;
  }
  return n;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

detail::Node& Tensor::node() const {
  if (!n_) throw std::runtime_error("operation on an empty tensor handle");
  return *n_;
}

Tensor Tensor::zeros(const Shape& s) { return full(s, 0.0); }

Tensor Tensor::full(const Shape& s, double v) {
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value.assign(static_cast<std::size_t>(shape_numel(s)), v);
  return wrap(std::move(n));
}

Tensor Tensor::from_vector(const Shape& s, std::vector<double> v) {
  if (shape_numel(s) != static_cast<std::int64_t>(v.size()))
    throw std::invalid_argument("from_vector: shape " + shape_str(s) + " needs " +
                                std::to_string(shape_numel(s)) + " values, got " +
                                std::to_string(v.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value = std::move(v);
  return wrap(std::move(n));
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item(): tensor has shape " + shape_str(shape()) +
                                ", expected a single element");
  return node().value[0];
}

bool Tensor::all_finite() const {
  for (double v : node().value)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor& Tensor::set_requires_grad(bool b) {
  auto& n = node();
  if (b && n.backward_fn)
    throw std::invalid_argument("set_requires_grad: only leaf tensors can be marked");
  n.requires_grad = b;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  auto& n = node();
  if (!n.requires_grad)
    throw std::runtime_error("grad(): tensor does not require gradients");
  n.ensure_grad();
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  n.grad.assign(n.value.size(), 0.0);
}

Tensor Tensor::detach_copy() const {
  auto& n = node();
  auto m = std::make_shared<detail::Node>();
  m->shape = n.shape;
  m->value = n.value;
  return wrap(std::move(m));
}

void Tensor::backward() const {
  auto& root = node();
  if (root.numel() != 1)
    throw std::invalid_argument("backward(): root must be scalar, got shape " +
                                shape_str(root.shape));
  if (!root.requires_grad) return;

  // iterative post-order DFS over nodes that require gradients
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [nd, idx] = stack.back();
    if (idx < nd->parents.size()) {
      detail::Node* p = nd->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(nd);
      stack.pop_back();
    }
  }

  // Interior grads are per-sweep scratch; only leaf grads persist, so
  // repeated backward() calls sum leaf gradients without double-counting.
  for (detail::Node* nd : order) {
    if (nd->backward_fn)
      nd->grad.assign(nd->value.size(), 0.0);
    else
      nd->ensure_grad();
  }
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* nd = *it;
    if (nd->backward_fn) nd->backward_fn(*nd);
  }
}

}  // namespace condflow
