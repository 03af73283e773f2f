#include "condflow/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "condflow/kernels.hpp"

namespace condflow {

void ParamSet::add(const std::string& name, const Tensor& t) {
  if (items_.count(name)) throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
  Entry e;
  e.value = t;
  e.value.set_requires_grad(true);
  items_.emplace(name, std::move(e));
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::invalid_argument("ParamSet: no parameter '" + name + "'");
  return it->second.value;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::invalid_argument("ParamSet: no parameter '" + name + "'");
  return it->second.value;
}

void ParamSet::zero_grads() {
  for (auto& [name, e] : items_) e.value.node().grad.clear();
}

double ParamSet::grad_l2_norm() const {
  double s = 0.0;
  for (const auto& [name, e] : items_) {
    const auto& g = e.value.node().grad;
    if (!g.empty()) s += kernels::ops().dot(g.data(), g.data(), g.size());
  }
  return std::sqrt(s);
}

std::string ParamSet::param_norms_summary() const {
  std::ostringstream os;
  for (const auto& [name, e] : items_) {
    const auto& v = e.value.values();
    double s = kernels::ops().dot(v.data(), v.data(), v.size());
    os << "  " << name << " |w|=" << std::sqrt(s) << "\n";
  }
  return os.str();
}

void adam_step(ParamSet& params, const AdamConfig& cfg) {
  // validate first so a partial update never happens
  for (auto& [name, e] : params.items()) {
    auto& node = e.value.node();
    if (node.grad.size() != node.value.size())
      throw std::runtime_error("adam_step: parameter '" + name +
                               "' has no gradient (was backward() run?)");
  }
  for (auto& [name, e] : params.items()) {
    auto& node = e.value.node();
    const std::size_t n = node.value.size();
    if (e.m.size() != n) {
      e.m.assign(n, 0.0);
      e.v.assign(n, 0.0);
    }
    e.step += 1;
    const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
    const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = node.grad[i];
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / b1t;
      const double vhat = e.v[i] / b2t;
      node.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    node.grad.clear();  // "no gradient" state until the next backward
  }
}

}  // namespace condflow
