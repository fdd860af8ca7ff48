#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cycleasr/tensor.hpp"

namespace cycleasr {

// Per-parameter comparison of analytic gradients against central finite
// differences.
struct GradReport {
  struct Entry {
    std::string name;
    Real max_rel_err = 0;
  };
  std::vector<Entry> entries;

  Real max_rel_err() const;
  bool ok(Real tol) const { return max_rel_err() < tol; }
  std::string to_string() const;
};

// f must rebuild and return the scalar loss from the current parameter
// values, and be deterministic (freeze any stochastic layers). Relative
// error per element is |a - n| / max(|a|, |n|, 1e-8). Parameters the loss
// does not reach get a zero analytic gradient, which is what the finite
// differences produce too.
GradReport grad_check(const std::function<Tensor()>& f,
                      const std::vector<std::pair<std::string, Tensor>>& params,
                      Real eps = Real(1e-5));

}  // namespace cycleasr
