#include "cycleasr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cycleasr {

namespace {

thread_local Tape* g_active_tape = nullptr;

size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::shared_ptr<detail::TensorImpl> make_impl(std::vector<int> shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  size_t n = checked_numel(shape);
  impl->shape = std::move(shape);
  impl->data.resize(n, Real(0));
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, Real value, bool requires_grad) {
  auto impl = make_impl(std::move(shape), requires_grad);
  std::fill(impl->data.begin(), impl->data.end(), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<Real> data, bool requires_grad) {
  size_t n = checked_numel(shape);
  if (n != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows() requires a 2-D tensor, got " + shape_string(shape()));
  return impl_->shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols() requires a 2-D tensor, got " + shape_string(shape()));
  return impl_->shape[1];
}

Real Tensor::value() const {
  if (numel() != 1) {
    throw ShapeError("value() requires a scalar tensor, got " + shape_string(shape()));
  }
  return impl_->data[0];
}

const std::vector<Real>& Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient");
  return impl_->grad;
}

std::vector<Real> Tensor::grad_or_zero() const {
  if (has_grad()) return impl_->grad;
  return std::vector<Real>(impl_->data.size(), Real(0));
}

void Tensor::accumulate_grad(const std::vector<Real>& g) {
  if (g.size() != impl_->data.size()) {
    throw ShapeError("gradient size mismatch for tensor " + shape_string(shape()));
  }
  if (impl_->grad.empty()) {
    impl_->grad = g;
  } else {
    for (size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
  }
}

Tensor Tensor::detach() const {
  return Tensor::from_data(impl_->shape, impl_->data, false);
}

Tensor Tensor::clone() const {
  Tensor t = Tensor::from_data(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

std::vector<Real>* BackwardCtx::find(const detail::TensorImpl* t) {
  auto it = adjoints.find(t);
  return it == adjoints.end() ? nullptr : &it->second;
}

std::vector<Real>& BackwardCtx::accum(const detail::TensorImpl* t, size_t n) {
  auto [it, inserted] = adjoints.try_emplace(t);
  if (inserted) it->second.assign(n, Real(0));
  return it->second;
}

void Tape::record(std::function<void(BackwardCtx&)> fn,
                  const std::shared_ptr<detail::TensorImpl>& out) {
  nodes_.push_back(std::move(fn));
  produced_.insert(out.get());
  outputs_.push_back(out);
}

BackwardCtx Tape::run_reverse(const Tensor& loss) {
  if (!loss.defined()) throw InputError("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw StateError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  }
  if (consumed_) throw StateError("backward: tape already consumed; clear() it first");
  consumed_ = true;

  BackwardCtx ctx;
  ctx.adjoints[loss.impl()] = {Real(1)};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(ctx);
  return ctx;
}

void Tape::backward(const Tensor& loss) {
  BackwardCtx ctx = run_reverse(loss);
  for (auto& [impl, adj] : ctx.adjoints) {
    auto* t = const_cast<detail::TensorImpl*>(impl);
    if (!t->requires_grad) continue;
    if (t->grad.empty()) {
      t->grad = std::move(adj);
    } else {
      for (size_t i = 0; i < adj.size(); ++i) t->grad[i] += adj[i];
    }
  }
}

GradMap Tape::backward_map(const Tensor& loss) {
  BackwardCtx ctx = run_reverse(loss);
  GradMap out;
  for (auto& [impl, adj] : ctx.adjoints) {
    if (!impl->requires_grad) continue;
    if (produced_.count(impl)) continue;  // intermediate, not a leaf
    out.emplace(static_cast<const void*>(impl), std::move(adj));
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  produced_.clear();
  outputs_.clear();
  consumed_ = false;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = prev_; }

void merge_grad_maps(GradMap& into, const GradMap& from) {
  for (const auto& [key, g] : from) {
    auto it = into.find(key);
    if (it == into.end()) {
      into.emplace(key, g);
    } else {
      if (it->second.size() != g.size()) throw ShapeError("merge_grad_maps: size mismatch");
      for (size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace cycleasr
