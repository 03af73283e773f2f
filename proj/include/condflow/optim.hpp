#pragma once
// Named parameter registry + Adam.  Iteration order is the sorted name order
// (std::map), which keeps init, updates and serialization deterministic.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "condflow/tensor.hpp"

namespace condflow {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamSet {
 public:
  struct Entry {
    Tensor value;
    std::vector<double> m, v;  // Adam moments, sized lazily
    std::int64_t step = 0;
  };

  // registers a leaf tensor (marks requires_grad); duplicate names rejected
  void add(const std::string& name, const Tensor& t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return items_.count(name) != 0; }
  std::size_t size() const { return items_.size(); }

  std::map<std::string, Entry>& items() { return items_; }
  const std::map<std::string, Entry>& items() const { return items_; }

  void zero_grads();
  double grad_l2_norm() const;
  std::string param_norms_summary() const;  // "name |w|=..    " lines, for error reports

 private:
  std::map<std::string, Entry> items_;
};

// One Adam update over every parameter, bias-corrected, then clears all
// gradients.  A parameter with no accumulated gradient buffer is an error
// naming the parameter.
void adam_step(ParamSet& params, const AdamConfig& cfg);

}  // namespace condflow
