#pragma once

#include <vector>

#include "cycleasr/tensor.hpp"

namespace cycleasr {

struct AdamConfig {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  Real clip_norm = Real(5.0);  // global gradient-norm clipping; <=0 disables
};

// Adam with bias correction and global-norm clipping across all parameters.
// Gradients arrive as a map keyed by tensor identity; parameters absent from
// the map take a zero gradient for the step.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step(const GradMap& grads);
  // Total gradient norm seen by the latest step (before clipping).
  Real last_grad_norm() const { return last_norm_; }
  AdamConfig& config() { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
  Real last_norm_ = 0;
};

}  // namespace cycleasr
