#include "cycleasr/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace cycleasr {

Real GradReport::max_rel_err() const {
  Real worst = 0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

std::string GradReport::to_string() const {
  std::ostringstream os;
  for (const auto& e : entries) os << e.name << ": " << e.max_rel_err << "\n";
  return os.str();
}

GradReport grad_check(const std::function<Tensor()>& f,
                      const std::vector<std::pair<std::string, Tensor>>& params,
                      Real eps) {
  if (eps <= 0) throw ConfigError("grad_check: eps must be positive");

  for (const auto& [name, p] : params) p.impl()->requires_grad = true;

  GradMap analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    analytic = tape.backward_map(loss);
  }

  GradReport report;
  for (const auto& [name, p] : params) {
    auto it = analytic.find(p.id());
    std::vector<Real> a = it != analytic.end()
                              ? it->second
                              : std::vector<Real>(p.data().size(), Real(0));
    GradReport::Entry entry{name, 0};
    auto& values = p.impl()->data;
    for (size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      NoGradScope frozen;
      values[i] = saved + eps;
      const Real up = f().value();
      values[i] = saved - eps;
      const Real down = f().value();
      values[i] = saved;
      const Real n = (up - down) / (2 * eps);
      if (!std::isfinite(a[i]) || !std::isfinite(n)) {
        throw NumericError("grad_check: non-finite gradient for parameter '" + name +
                           "' element " + std::to_string(i));
      }
      const Real rel = std::abs(a[i] - n) /
                       std::max({std::abs(a[i]), std::abs(n), Real(1e-8)});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace cycleasr
