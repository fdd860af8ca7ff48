#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cycleasr/common.hpp"

namespace cycleasr {

namespace detail {
struct TensorImpl {
  std::vector<int> shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor handle with shared storage. Copies are shallow;
// use clone()/detach() for value copies.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, Real value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<Real> data,
                          bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int numel() const { return static_cast<int>(impl_->data.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rows() const;
  int cols() const;

  std::vector<Real>& data() { return impl_->data; }
  const std::vector<Real>& data() const { return impl_->data; }
  Real value() const;            // scalar tensor (shape [1])
  Real at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  Real at(int r, int c) const { return impl_->data[static_cast<size_t>(r) * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<Real>& grad() const;
  std::vector<Real> grad_or_zero() const;
  void accumulate_grad(const std::vector<Real>& g);
  void zero_grad() { impl_->grad.clear(); }

  // Value copy that does not participate in any gradient graph.
  Tensor detach() const;
  // Deep copy preserving requires_grad (fresh identity).
  Tensor clone() const;

  const void* id() const { return impl_.get(); }
  detail::TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Adjoint buffers for one backward pass, keyed by tensor identity.
class BackwardCtx {
 public:
  // Adjoint of t, or nullptr if no gradient has reached it.
  std::vector<Real>* find(const detail::TensorImpl* t);
  // Adjoint of t, created zero-filled with n elements on first access.
  std::vector<Real>& accum(const detail::TensorImpl* t, size_t n);

  std::unordered_map<const detail::TensorImpl*, std::vector<Real>> adjoints;
};

// Gradients keyed by parameter identity (Tensor::id()).
using GradMap = std::unordered_map<const void*, std::vector<Real>>;

// Records primitive applications in execution order; reverse replay yields
// gradients. One tape per training step, cleared afterwards. Single-owner:
// never shared across threads (workers each run their own tape and merge
// the resulting gradient maps by summation).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void(BackwardCtx&)> fn,
              const std::shared_ptr<detail::TensorImpl>& out);

  // Accumulates gradients into every requires_grad tensor the loss reaches.
  void backward(const Tensor& loss);
  // Pure variant: returns gradients of reached leaf tensors (tensors not
  // produced by this tape, i.e. parameters and constants marked
  // requires_grad) without touching any Tensor::grad buffer.
  GradMap backward_map(const Tensor& loss);

  void clear();
  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

 private:
  BackwardCtx run_reverse(const Tensor& loss);

  std::vector<std::function<void(BackwardCtx&)>> nodes_;
  std::unordered_set<const detail::TensorImpl*> produced_;
  std::vector<std::shared_ptr<detail::TensorImpl>> outputs_;  // keep alive
  bool consumed_ = false;
};

// Makes a tape the active recording target on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Disables recording; all operations evaluate as plain values.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

// Sums `from` into `into` (missing keys are inserted).
void merge_grad_maps(GradMap& into, const GradMap& from);

std::string shape_string(const std::vector<int>& shape);

}  // namespace cycleasr
