#pragma once
// Dense float64 tensors with taped reverse-mode autodiff.
//
// A Tensor is a shared handle to a graph node.  Ops (ops.hpp) compute values
// eagerly and, when gradients are enabled and an input requires them, attach
// a backward closure.  backward() on a scalar walks the tape in reverse
// topological order and *accumulates* into .grad of every reachable tensor
// that requires gradients; grads persist until zero_grad().
//
// Layout is row-major over [H, W, C] (or any rank); extents are positive.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace condflow {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);  // validates positivity, guards overflow

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // may be empty (leaf / no-grad op)

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;  // empty handle; most methods require a real one

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor from_vector(const Shape& s, std::vector<double> v);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::int64_t numel() const { return node().numel(); }
  std::int64_t dim(std::size_t i) const { return node().shape.at(i); }
  std::size_t rank() const { return node().shape.size(); }

  const std::vector<double>& values() const { return node().value; }
  std::vector<double>& values_mut() { return node().value; }  // leaves only; no tape rewrite
  double item() const;  // requires numel() == 1
  double at(std::int64_t flat) const { return node().value.at(flat); }

  bool all_finite() const;

  Tensor& set_requires_grad(bool b);
  bool requires_grad() const { return node().requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();

  // reverse-mode sweep from a scalar
  void backward() const;

  // deep value copy as a fresh leaf (no tape history)
  Tensor detach_copy() const;

  detail::Node& node() const;
  std::shared_ptr<detail::Node> handle() const { return n_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> n_;
};

// Gradient recording is on by default; NoGradGuard disables it for a scope
// (sampling, evaluation), so ops build no tape.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace condflow
