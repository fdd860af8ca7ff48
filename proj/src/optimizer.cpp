#include "cycleasr/optimizer.hpp"

#include <cmath>

namespace cycleasr {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr < 0) throw ConfigError("Adam: negative learning rate");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.data().size(), Real(0));
    v_.emplace_back(p.data().size(), Real(0));
  }
}

void Adam::step(const GradMap& grads) {
  // Gather per-parameter gradient views (zeros when the loss missed one).
  std::vector<const std::vector<Real>*> gs(params_.size(), nullptr);
  Real sq_norm = 0;
  for (size_t k = 0; k < params_.size(); ++k) {
    auto it = grads.find(params_[k].id());
    if (it == grads.end()) continue;
    if (it->second.size() != params_[k].data().size()) {
      throw ShapeError("Adam: gradient size mismatch for parameter " +
                       shape_string(params_[k].shape()));
    }
    gs[k] = &it->second;
    for (Real g : it->second) sq_norm += g * g;
  }
  last_norm_ = std::sqrt(sq_norm);
  Real scale = Real(1);
  if (cfg_.clip_norm > 0 && last_norm_ > cfg_.clip_norm) {
    scale = cfg_.clip_norm / last_norm_;
  }

  ++t_;
  const Real bc1 = Real(1) - std::pow(cfg_.beta1, static_cast<Real>(t_));
  const Real bc2 = Real(1) - std::pow(cfg_.beta2, static_cast<Real>(t_));
  if (cfg_.lr == 0) return;  // moments untouched so a zero-lr run is a no-op
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& data = params_[k].data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < data.size(); ++i) {
      const Real g = gs[k] ? (*gs[k])[i] * scale : Real(0);
      m[i] = cfg_.beta1 * m[i] + (Real(1) - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (Real(1) - cfg_.beta2) * g * g;
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace cycleasr
