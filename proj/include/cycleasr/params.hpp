#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cycleasr/rng.hpp"
#include "cycleasr/tensor.hpp"

namespace cycleasr {

// Ordered collection of named trainable tensors. The order of registration
// is the canonical order for checkpoints and optimizer state.
class ParamRegistry {
 public:
  // Registers t under name, marks it trainable, and returns it.
  Tensor add(const std::string& name, Tensor t);
  // Fresh tensor with entries uniform in [-scale, scale].
  Tensor add_uniform(const std::string& name, std::vector<int> shape, Rng& rng,
                     Real scale = Real(0.1));
  // Fresh all-zero tensor (biases).
  Tensor add_zeros(const std::string& name, std::vector<int> shape);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor find(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  size_t size() const { return items_.size(); }

  std::vector<Tensor> tensors() const;
  void zero_grads();
  // Total number of scalar parameters.
  size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// Copies values from src into dst, which must register the same names with
// the same shapes in the same order. Tensor identities in dst survive.
void copy_values(const ParamRegistry& src, ParamRegistry& dst);

}  // namespace cycleasr
