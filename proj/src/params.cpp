#include "cycleasr/params.hpp"

namespace cycleasr {

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  if (!t.defined()) throw InputError("ParamRegistry: undefined tensor for '" + name + "'");
  if (index_.count(name)) throw ConfigError("ParamRegistry: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::add_uniform(const std::string& name, std::vector<int> shape, Rng& rng,
                                  Real scale) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-scale, scale));
  return add(name, std::move(t));
}

Tensor ParamRegistry::add_zeros(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamRegistry::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParamRegistry: no parameter named '" + name + "'");
  return items_[it->second].second;
}

std::vector<Tensor> ParamRegistry::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t);
  return out;
}

void ParamRegistry::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

size_t ParamRegistry::scalar_count() const {
  size_t n = 0;
  for (const auto& [name, t] : items_) n += t.data().size();
  return n;
}

void copy_values(const ParamRegistry& src, ParamRegistry& dst) {
  if (src.size() != dst.size()) {
    throw InputError("copy_values: registries hold different parameter counts");
  }
  for (size_t i = 0; i < src.size(); ++i) {
    const auto& [src_name, src_t] = src.items()[i];
    const auto& [dst_name, dst_t] = dst.items()[i];
    if (src_name != dst_name) {
      throw InputError("copy_values: parameter '" + dst_name + "' does not match '" +
                       src_name + "'");
    }
    if (src_t.shape() != dst_t.shape()) {
      throw ShapeError("copy_values: shape mismatch for '" + src_name + "'");
    }
    Tensor target = dst_t;  // handles share storage
    target.data() = src_t.data();
  }
}

}  // namespace cycleasr
