#include "cycleasr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

namespace cycleasr {
namespace ops {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

constexpr Real kBceEps = Real(1e-12);

void need_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw InputError(std::string(op) + ": undefined input tensor");
}

void need_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  need_defined(op, a);
  need_defined(op, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

bool tracing(std::initializer_list<const Tensor*> ins) {
  if (!Tape::active()) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool tracing(const std::vector<Tensor>& ins) {
  if (!Tape::active()) return false;
  for (const Tensor& t : ins) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Marks `out` as a traced intermediate and records its backward rule.
void record(Tensor& out, std::function<void(BackwardCtx&)> fn) {
  out.set_requires_grad(true);
  Tape::active()->record(std::move(fn), out.impl_ptr());
}

// Rows/cols view for the row-wise ops (1-D tensors count as a single row).
std::pair<int, int> row_view(const char* op, const Tensor& x) {
  need_defined(op, x);
  if (x.ndim() == 1) return {1, x.dim(0)};
  if (x.ndim() == 2) return {x.dim(0), x.dim(1)};
  throw ShapeError(std::string(op) + ": expected 1-D or 2-D tensor, got " +
                   shape_string(x.shape()));
}

Tensor ew_unary(const char* op, const Tensor& x, Real (*f)(Real),
                // dfdx(x, y) so implementations can reuse whichever is cheaper
                Real (*dfdx)(Real, Real)) {
  need_defined(op, x);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (size_t i = 0; i < xd.size(); ++i) od[i] = f(xd[i]);
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, dfdx](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) {
        gx[i] += (*g)[i] * dfdx(xi->data[i], oi->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  need_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.at(i) + b.at(i);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      for (const Impl& in : {ai, bi}) {
        if (!in->requires_grad) continue;
        auto& gi = ctx.accum(in.get(), in->data.size());
        for (size_t i = 0; i < gi.size(); ++i) gi[i] += (*g)[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.at(i) - b.at(i);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      if (ai->requires_grad) {
        auto& ga = ctx.accum(ai.get(), ai->data.size());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
      }
      if (bi->requires_grad) {
        auto& gb = ctx.accum(bi.get(), bi->data.size());
        for (size_t i = 0; i < gb.size(); ++i) gb[i] -= (*g)[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.at(i) * b.at(i);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      if (ai->requires_grad) {
        auto& ga = ctx.accum(ai.get(), ai->data.size());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& gb = ctx.accum(bi.get(), bi->data.size());
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += (*g)[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  need_same_shape("div", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.at(i) / b.at(i);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      if (ai->requires_grad) {
        auto& ga = ctx.accum(ai.get(), ai->data.size());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i] / bi->data[i];
      }
      if (bi->requires_grad) {
        auto& gb = ctx.accum(bi.get(), bi->data.size());
        for (size_t i = 0; i < gb.size(); ++i) {
          gb[i] -= (*g)[i] * oi->data[i] / bi->data[i];
        }
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, Real c) {
  need_defined("add_scalar", x);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.numel(); ++i) out.data()[i] = x.at(i) + c;
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& x, Real c) {
  need_defined("mul_scalar", x);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.numel(); ++i) out.data()[i] = x.at(i) * c;
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i] * c;
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  return ew_unary(
      "tanh", x, [](Real v) { return std::tanh(v); },
      [](Real, Real y) { return Real(1) - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return ew_unary(
      "sigmoid", x, [](Real v) { return Real(1) / (Real(1) + std::exp(-v)); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor relu(const Tensor& x) {
  return ew_unary(
      "relu", x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

Tensor exp(const Tensor& x) {
  return ew_unary(
      "exp", x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& x) {
  return ew_unary(
      "log", x, [](Real v) { return std::log(v); },
      [](Real v, Real) { return Real(1) / v; });
}

Tensor rsqrt(const Tensor& x) {
  return ew_unary(
      "rsqrt", x, [](Real v) { return Real(1) / std::sqrt(v); },
      [](Real, Real y) { return Real(-0.5) * y * y * y; });
}

Tensor softmax(const Tensor& x) {
  auto [r, c] = row_view("softmax", x);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (int i = 0; i < r; ++i) {
    const Real* row = xd.data() + static_cast<size_t>(i) * c;
    Real* orow = od.data() + static_cast<size_t>(i) * c;
    Real m = *std::max_element(row, row + c);
    Real z = 0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - m);
      z += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= z;
  }
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, r = r, c = c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        Real dot = 0;
        for (int j = 0; j < c; ++j) dot += (*g)[base + j] * oi->data[base + j];
        for (int j = 0; j < c; ++j) {
          gx[base + j] += oi->data[base + j] * ((*g)[base + j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  auto [r, c] = row_view("log_softmax", x);
  Tensor out = Tensor::zeros(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (int i = 0; i < r; ++i) {
    const Real* row = xd.data() + static_cast<size_t>(i) * c;
    Real* orow = od.data() + static_cast<size_t>(i) * c;
    Real m = *std::max_element(row, row + c);
    Real z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - m);
    Real lse = m + std::log(z);
    for (int j = 0; j < c; ++j) orow[j] = row[j] - lse;
  }
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, r = r, c = c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        Real gsum = 0;
        for (int j = 0; j < c; ++j) gsum += (*g)[base + j];
        for (int j = 0; j < c; ++j) {
          gx[base + j] += (*g)[base + j] - std::exp(oi->data[base + j]) * gsum;
        }
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  need_defined("matmul", a);
  need_defined("matmul", b);
  const int and_ = a.ndim(), bnd = b.ndim();
  if (and_ == 2 && bnd == 2) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
      throw ShapeError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        const Real av = ad[static_cast<size_t>(i) * k + p];
        if (av == Real(0)) continue;
        const Real* brow = bd.data() + static_cast<size_t>(p) * n;
        Real* orow = od.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
    if (tracing({&a, &b})) {
      Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
      record(out, [ai, bi, oi, m, k, n](BackwardCtx& ctx) {
        auto* g = ctx.find(oi.get());
        if (!g) return;
        if (ai->requires_grad) {
          auto& ga = ctx.accum(ai.get(), ai->data.size());
          for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
              Real s = 0;
              const Real* grow = g->data() + static_cast<size_t>(i) * n;
              const Real* brow = bi->data.data() + static_cast<size_t>(p) * n;
              for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
              ga[static_cast<size_t>(i) * k + p] += s;
            }
          }
        }
        if (bi->requires_grad) {
          auto& gb = ctx.accum(bi.get(), bi->data.size());
          for (int i = 0; i < m; ++i) {
            const Real* grow = g->data() + static_cast<size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              const Real av = ai->data[static_cast<size_t>(i) * k + p];
              if (av == Real(0)) continue;
              Real* gbrow = gb.data() + static_cast<size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
    }
    return out;
  }
  if (and_ == 1 && bnd == 2) {
    const int k = a.dim(0), n = b.dim(1);
    if (b.dim(0) != k) {
      throw ShapeError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros({n});
    for (int p = 0; p < k; ++p) {
      const Real av = a.at(p);
      if (av == Real(0)) continue;
      const Real* brow = b.data().data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) out.data()[j] += av * brow[j];
    }
    if (tracing({&a, &b})) {
      Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
      record(out, [ai, bi, oi, k, n](BackwardCtx& ctx) {
        auto* g = ctx.find(oi.get());
        if (!g) return;
        if (ai->requires_grad) {
          auto& ga = ctx.accum(ai.get(), ai->data.size());
          for (int p = 0; p < k; ++p) {
            Real s = 0;
            const Real* brow = bi->data.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) s += (*g)[j] * brow[j];
            ga[p] += s;
          }
        }
        if (bi->requires_grad) {
          auto& gb = ctx.accum(bi.get(), bi->data.size());
          for (int p = 0; p < k; ++p) {
            const Real av = ai->data[p];
            if (av == Real(0)) continue;
            Real* gbrow = gb.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * (*g)[j];
          }
        }
      });
    }
    return out;
  }
  if (and_ == 2 && bnd == 1) {
    const int m = a.dim(0), k = a.dim(1);
    if (b.dim(0) != k) {
      throw ShapeError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
      Real s = 0;
      const Real* arow = a.data().data() + static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) s += arow[p] * b.at(p);
      out.data()[i] = s;
    }
    if (tracing({&a, &b})) {
      Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
      record(out, [ai, bi, oi, m, k](BackwardCtx& ctx) {
        auto* g = ctx.find(oi.get());
        if (!g) return;
        if (ai->requires_grad) {
          auto& ga = ctx.accum(ai.get(), ai->data.size());
          for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
              ga[static_cast<size_t>(i) * k + p] += (*g)[i] * bi->data[p];
            }
          }
        }
        if (bi->requires_grad) {
          auto& gb = ctx.accum(bi.get(), bi->data.size());
          for (int i = 0; i < m; ++i) {
            const Real* arow = ai->data.data() + static_cast<size_t>(i) * k;
            for (int p = 0; p < k; ++p) gb[p] += (*g)[i] * arow[p];
          }
        }
      });
    }
    return out;
  }
  throw ShapeError("matmul: unsupported ranks " + shape_string(a.shape()) + " x " +
                   shape_string(b.shape()));
}

Tensor conv1d(const Tensor& seq, const Tensor& w, int kernel) {
  need_defined("conv1d", seq);
  need_defined("conv1d", w);
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("conv1d: kernel width must be odd and positive, got " +
                      std::to_string(kernel));
  }
  if (seq.ndim() != 2 || w.ndim() != 2) {
    throw ShapeError("conv1d: expects 2-D seq and weights, got " +
                     shape_string(seq.shape()) + " and " + shape_string(w.shape()));
  }
  const int L = seq.dim(0), C = seq.dim(1), F = w.dim(1);
  if (w.dim(0) != kernel * C) {
    throw ShapeError("conv1d: weight rows " + std::to_string(w.dim(0)) +
                     " != kernel*channels " + std::to_string(kernel * C));
  }
  const int P = (kernel - 1) / 2;
  Tensor out = Tensor::zeros({L, F});
  const auto& xd = seq.data();
  const auto& wd = w.data();
  auto& od = out.data();
  for (int l = 0; l < L; ++l) {
    Real* orow = od.data() + static_cast<size_t>(l) * F;
    for (int d = 0; d < kernel; ++d) {
      const int src = l + d - P;
      if (src < 0 || src >= L) continue;
      const Real* xrow = xd.data() + static_cast<size_t>(src) * C;
      for (int c = 0; c < C; ++c) {
        const Real xv = xrow[c];
        if (xv == Real(0)) continue;
        const Real* wrow = wd.data() + static_cast<size_t>(d * C + c) * F;
        for (int f = 0; f < F; ++f) orow[f] += xv * wrow[f];
      }
    }
  }
  if (tracing({&seq, &w})) {
    Impl xi = seq.impl_ptr(), wi = w.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, wi, oi, L, C, F, kernel, P](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      if (xi->requires_grad) {
        auto& gx = ctx.accum(xi.get(), xi->data.size());
        for (int m = 0; m < L; ++m) {
          for (int d = 0; d < kernel; ++d) {
            const int l = m - d + P;
            if (l < 0 || l >= L) continue;
            const Real* grow = g->data() + static_cast<size_t>(l) * F;
            for (int c = 0; c < C; ++c) {
              const Real* wrow = wi->data.data() + static_cast<size_t>(d * C + c) * F;
              Real s = 0;
              for (int f = 0; f < F; ++f) s += grow[f] * wrow[f];
              gx[static_cast<size_t>(m) * C + c] += s;
            }
          }
        }
      }
      if (wi->requires_grad) {
        auto& gw = ctx.accum(wi.get(), wi->data.size());
        for (int l = 0; l < L; ++l) {
          const Real* grow = g->data() + static_cast<size_t>(l) * F;
          for (int d = 0; d < kernel; ++d) {
            const int src = l + d - P;
            if (src < 0 || src >= L) continue;
            const Real* xrow = xi->data.data() + static_cast<size_t>(src) * C;
            for (int c = 0; c < C; ++c) {
              Real* gwrow = gw.data() + static_cast<size_t>(d * C + c) * F;
              for (int f = 0; f < F; ++f) gwrow[f] += xrow[c] * grow[f];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InputError("concat_cols: needs at least one input");
  for (const Tensor& t : xs) need_defined("concat_cols", t);
  const int nd = xs[0].ndim();
  if (nd != 1 && nd != 2) {
    throw ShapeError("concat_cols: expects 1-D or 2-D tensors, got " +
                     shape_string(xs[0].shape()));
  }
  const int r = nd == 2 ? xs[0].dim(0) : 1;
  int total = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != nd || (nd == 2 && t.dim(0) != r)) {
      throw ShapeError("concat_cols: incompatible shapes " + shape_string(xs[0].shape()) +
                       " vs " + shape_string(t.shape()));
    }
    total += t.dim(nd - 1);
  }
  Tensor out = nd == 1 ? Tensor::zeros({total}) : Tensor::zeros({r, total});
  int off = 0;
  for (const Tensor& t : xs) {
    const int c = t.dim(nd - 1);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        out.data()[static_cast<size_t>(i) * total + off + j] =
            t.data()[static_cast<size_t>(i) * c + j];
      }
    }
    off += c;
  }
  if (tracing(xs)) {
    std::vector<Impl> ins;
    ins.reserve(xs.size());
    for (const Tensor& t : xs) ins.push_back(t.impl_ptr());
    Impl oi = out.impl_ptr();
    record(out, [ins, oi, r, total](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      int off = 0;
      for (const Impl& in : ins) {
        const int c = static_cast<int>(in->data.size()) / r;
        if (in->requires_grad) {
          auto& gi = ctx.accum(in.get(), in->data.size());
          for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
              gi[static_cast<size_t>(i) * c + j] +=
                  (*g)[static_cast<size_t>(i) * total + off + j];
            }
          }
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InputError("stack_rows: needs at least one input");
  for (const Tensor& t : xs) {
    need_defined("stack_rows", t);
    if (t.ndim() != 1 || t.dim(0) != xs[0].dim(0)) {
      throw ShapeError("stack_rows: expects equal-length 1-D tensors, got " +
                       shape_string(t.shape()) + " vs " + shape_string(xs[0].shape()));
    }
  }
  const int n = static_cast<int>(xs.size()), c = xs[0].dim(0);
  Tensor out = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) out.data()[static_cast<size_t>(i) * c + j] = xs[i].at(j);
  }
  if (tracing(xs)) {
    std::vector<Impl> ins;
    ins.reserve(xs.size());
    for (const Tensor& t : xs) ins.push_back(t.impl_ptr());
    Impl oi = out.impl_ptr();
    record(out, [ins, oi, c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      for (size_t i = 0; i < ins.size(); ++i) {
        if (!ins[i]->requires_grad) continue;
        auto& gi = ctx.accum(ins[i].get(), ins[i]->data.size());
        for (int j = 0; j < c; ++j) gi[j] += (*g)[i * c + j];
      }
    });
  }
  return out;
}

Tensor take_rows(const Tensor& x, const std::vector<int>& indices) {
  need_defined("take_rows", x);
  if (x.ndim() != 2) {
    throw ShapeError("take_rows: expects a 2-D tensor, got " + shape_string(x.shape()));
  }
  if (indices.empty()) throw InputError("take_rows: empty index list");
  const int m = x.dim(0), c = x.dim(1);
  for (int idx : indices) {
    if (idx < 0 || idx >= m) {
      throw InputError("take_rows: index " + std::to_string(idx) + " out of range [0," +
                       std::to_string(m) + ")");
    }
  }
  const int k = static_cast<int>(indices.size());
  Tensor out = Tensor::zeros({k, c});
  for (int i = 0; i < k; ++i) {
    const Real* src = x.data().data() + static_cast<size_t>(indices[i]) * c;
    std::copy(src, src + c, out.data().data() + static_cast<size_t>(i) * c);
  }
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, indices, c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < indices.size(); ++i) {
        for (int j = 0; j < c; ++j) {
          gx[static_cast<size_t>(indices[i]) * c + j] += (*g)[i * c + j];
        }
      }
    });
  }
  return out;
}

Tensor pick_row(const Tensor& x, int index) {
  need_defined("pick_row", x);
  if (x.ndim() != 2) {
    throw ShapeError("pick_row: expects a 2-D tensor, got " + shape_string(x.shape()));
  }
  const int m = x.dim(0), c = x.dim(1);
  if (index < 0 || index >= m) {
    throw InputError("pick_row: index " + std::to_string(index) + " out of range [0," +
                     std::to_string(m) + ")");
  }
  Tensor out = Tensor::zeros({c});
  const Real* src = x.data().data() + static_cast<size_t>(index) * c;
  std::copy(src, src + c, out.data().data());
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, index, c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (int j = 0; j < c; ++j) gx[static_cast<size_t>(index) * c + j] += (*g)[j];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int count) {
  auto [r, c] = row_view("slice_cols", x);
  if (count < 1 || begin < 0 || begin + count > c) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") invalid for " +
                     shape_string(x.shape()));
  }
  Tensor out = x.ndim() == 1 ? Tensor::zeros({count}) : Tensor::zeros({r, count});
  for (int i = 0; i < r; ++i) {
    const Real* src = x.data().data() + static_cast<size_t>(i) * c + begin;
    std::copy(src, src + count, out.data().data() + static_cast<size_t>(i) * count);
  }
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, begin, count, r = r, c = c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < count; ++j) {
          gx[static_cast<size_t>(i) * c + begin + j] += (*g)[static_cast<size_t>(i) * count + j];
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  need_defined("sum_all", x);
  Real s = 0;
  for (int i = 0; i < x.numel(); ++i) s += x.at(i);
  Tensor out = Tensor::scalar(s);
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  need_defined("mean_all", x);
  const Real inv = Real(1) / static_cast<Real>(x.numel());
  Real s = 0;
  for (int i = 0; i < x.numel(); ++i) s += x.at(i);
  Tensor out = Tensor::scalar(s * inv);
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi, inv](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[0] * inv;
    });
  }
  return out;
}

Tensor sq_err(const Tensor& a, const Tensor& b) {
  need_same_shape("sq_err", a, b);
  const Real inv = Real(1) / static_cast<Real>(a.numel());
  Real s = 0;
  for (int i = 0; i < a.numel(); ++i) {
    const Real d = a.at(i) - b.at(i);
    s += d * d;
  }
  Tensor out = Tensor::scalar(s * inv);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi, inv](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      const Real scale = Real(2) * inv * (*g)[0];
      if (ai->requires_grad) {
        auto& ga = ctx.accum(ai.get(), ai->data.size());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += scale * (ai->data[i] - bi->data[i]);
      }
      if (bi->requires_grad) {
        auto& gb = ctx.accum(bi.get(), bi->data.size());
        for (size_t i = 0; i < gb.size(); ++i) gb[i] -= scale * (ai->data[i] - bi->data[i]);
      }
    });
  }
  return out;
}

Tensor abs_err(const Tensor& a, const Tensor& b) {
  need_same_shape("abs_err", a, b);
  const Real inv = Real(1) / static_cast<Real>(a.numel());
  Real s = 0;
  for (int i = 0; i < a.numel(); ++i) s += std::abs(a.at(i) - b.at(i));
  Tensor out = Tensor::scalar(s * inv);
  if (tracing({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record(out, [ai, bi, oi, inv](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      const Real scale = inv * (*g)[0];
      auto* ga = ai->requires_grad ? &ctx.accum(ai.get(), ai->data.size()) : nullptr;
      auto* gb = bi->requires_grad ? &ctx.accum(bi.get(), bi->data.size()) : nullptr;
      for (size_t i = 0; i < ai->data.size(); ++i) {
        const Real d = ai->data[i] - bi->data[i];
        const Real sgn = d > 0 ? Real(1) : (d < 0 ? Real(-1) : Real(0));
        if (ga) (*ga)[i] += scale * sgn;
        if (gb) (*gb)[i] -= scale * sgn;
      }
    });
  }
  return out;
}

Tensor bce_loss(const Tensor& p, const Tensor& t) {
  need_same_shape("bce_loss", p, t);
  const Real inv = Real(1) / static_cast<Real>(p.numel());
  Real s = 0;
  for (int i = 0; i < p.numel(); ++i) {
    const Real pc = std::clamp(p.at(i), kBceEps, Real(1) - kBceEps);
    s -= t.at(i) * std::log(pc) + (Real(1) - t.at(i)) * std::log(Real(1) - pc);
  }
  Tensor out = Tensor::scalar(s * inv);
  if (tracing({&p, &t})) {
    Impl pi = p.impl_ptr(), ti = t.impl_ptr(), oi = out.impl_ptr();
    record(out, [pi, ti, oi, inv](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      const Real scale = inv * (*g)[0];
      auto* gp = pi->requires_grad ? &ctx.accum(pi.get(), pi->data.size()) : nullptr;
      auto* gt = ti->requires_grad ? &ctx.accum(ti.get(), ti->data.size()) : nullptr;
      for (size_t i = 0; i < pi->data.size(); ++i) {
        const Real pv = pi->data[i];
        const Real pc = std::clamp(pv, kBceEps, Real(1) - kBceEps);
        // Clamped values sit on a flat of the forward function: zero slope.
        if (gp && pv > kBceEps && pv < Real(1) - kBceEps) {
          (*gp)[i] += scale * (-ti->data[i] / pc + (Real(1) - ti->data[i]) / (Real(1) - pc));
        }
        if (gt) (*gt)[i] += scale * (std::log(Real(1) - pc) - std::log(pc));
      }
    });
  }
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& v) {
  need_defined("add_rows", x);
  need_defined("add_rows", v);
  if (x.ndim() != 2 || v.ndim() != 1 || v.dim(0) != x.dim(1)) {
    throw ShapeError("add_rows: expects [r,c] and [c], got " + shape_string(x.shape()) +
                     " and " + shape_string(v.shape()));
  }
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      out.data()[static_cast<size_t>(i) * c + j] =
          x.data()[static_cast<size_t>(i) * c + j] + v.at(j);
    }
  }
  if (tracing({&x, &v})) {
    Impl xi = x.impl_ptr(), vi = v.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, vi, oi, r, c](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      if (xi->requires_grad) {
        auto& gx = ctx.accum(xi.get(), xi->data.size());
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
      }
      if (vi->requires_grad) {
        auto& gv = ctx.accum(vi.get(), vi->data.size());
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) gv[j] += (*g)[static_cast<size_t>(i) * c + j];
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, const std::vector<int>& shape) {
  need_defined("reshape", x);
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(std::max(d, 0));
  if (shape.empty() || n != x.data().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  Tensor out = Tensor::from_data(shape, x.data());
  if (tracing({&x})) {
    Impl xi = x.impl_ptr(), oi = out.impl_ptr();
    record(out, [xi, oi](BackwardCtx& ctx) {
      auto* g = ctx.find(oi.get());
      if (!g) return;
      auto& gx = ctx.accum(xi.get(), xi->data.size());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
    });
  }
  return out;
}

}  // namespace ops

namespace {

Real attr_real(const AttrMap& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ConfigError("missing attribute '" + key + "'");
  if (auto* r = std::get_if<Real>(&it->second)) return *r;
  if (auto* i = std::get_if<int>(&it->second)) return static_cast<Real>(*i);
  throw ConfigError("attribute '" + key + "' is not a real");
}

int attr_int(const AttrMap& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ConfigError("missing attribute '" + key + "'");
  if (auto* i = std::get_if<int>(&it->second)) return *i;
  throw ConfigError("attribute '" + key + "' is not an int");
}

std::vector<int> attr_ints(const AttrMap& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ConfigError("missing attribute '" + key + "'");
  if (auto* v = std::get_if<std::vector<int>>(&it->second)) return *v;
  throw ConfigError("attribute '" + key + "' is not an int list");
}

const Tensor& arg(const std::string& op, const std::vector<Tensor>& in, size_t i,
                  size_t expect) {
  if (in.size() != expect) {
    throw ShapeError(op + ": expects " + std::to_string(expect) + " inputs, got " +
                     std::to_string(in.size()));
  }
  return in[i];
}

using PrimFn = std::function<Tensor(const std::vector<Tensor>&, const AttrMap&)>;

const std::map<std::string, PrimFn>& registry() {
  static const std::map<std::string, PrimFn> table = {
      {"add", [](const auto& in, const auto&) { return ops::add(arg("add", in, 0, 2), in[1]); }},
      {"sub", [](const auto& in, const auto&) { return ops::sub(arg("sub", in, 0, 2), in[1]); }},
      {"mul", [](const auto& in, const auto&) { return ops::mul(arg("mul", in, 0, 2), in[1]); }},
      {"div", [](const auto& in, const auto&) { return ops::div(arg("div", in, 0, 2), in[1]); }},
      {"add_scalar",
       [](const auto& in, const auto& at) {
         return ops::add_scalar(arg("add_scalar", in, 0, 1), attr_real(at, "c"));
       }},
      {"mul_scalar",
       [](const auto& in, const auto& at) {
         return ops::mul_scalar(arg("mul_scalar", in, 0, 1), attr_real(at, "c"));
       }},
      {"tanh", [](const auto& in, const auto&) { return ops::tanh(arg("tanh", in, 0, 1)); }},
      {"sigmoid",
       [](const auto& in, const auto&) { return ops::sigmoid(arg("sigmoid", in, 0, 1)); }},
      {"relu", [](const auto& in, const auto&) { return ops::relu(arg("relu", in, 0, 1)); }},
      {"exp", [](const auto& in, const auto&) { return ops::exp(arg("exp", in, 0, 1)); }},
      {"log", [](const auto& in, const auto&) { return ops::log(arg("log", in, 0, 1)); }},
      {"rsqrt", [](const auto& in, const auto&) { return ops::rsqrt(arg("rsqrt", in, 0, 1)); }},
      {"softmax",
       [](const auto& in, const auto&) { return ops::softmax(arg("softmax", in, 0, 1)); }},
      {"log_softmax",
       [](const auto& in, const auto&) { return ops::log_softmax(arg("log_softmax", in, 0, 1)); }},
      {"matmul",
       [](const auto& in, const auto&) { return ops::matmul(arg("matmul", in, 0, 2), in[1]); }},
      {"conv1d",
       [](const auto& in, const auto& at) {
         return ops::conv1d(arg("conv1d", in, 0, 2), in[1], attr_int(at, "kernel"));
       }},
      {"concat_cols", [](const auto& in, const auto&) { return ops::concat_cols(in); }},
      {"stack_rows", [](const auto& in, const auto&) { return ops::stack_rows(in); }},
      {"take_rows",
       [](const auto& in, const auto& at) {
         return ops::take_rows(arg("take_rows", in, 0, 1), attr_ints(at, "indices"));
       }},
      {"pick_row",
       [](const auto& in, const auto& at) {
         return ops::pick_row(arg("pick_row", in, 0, 1), attr_int(at, "index"));
       }},
      {"slice_cols",
       [](const auto& in, const auto& at) {
         return ops::slice_cols(arg("slice_cols", in, 0, 1), attr_int(at, "begin"),
                                attr_int(at, "count"));
       }},
      {"sum_all", [](const auto& in, const auto&) { return ops::sum_all(arg("sum_all", in, 0, 1)); }},
      {"mean_all",
       [](const auto& in, const auto&) { return ops::mean_all(arg("mean_all", in, 0, 1)); }},
      {"sq_err",
       [](const auto& in, const auto&) { return ops::sq_err(arg("sq_err", in, 0, 2), in[1]); }},
      {"abs_err",
       [](const auto& in, const auto&) { return ops::abs_err(arg("abs_err", in, 0, 2), in[1]); }},
      {"bce_loss",
       [](const auto& in, const auto&) { return ops::bce_loss(arg("bce_loss", in, 0, 2), in[1]); }},
      {"add_rows",
       [](const auto& in, const auto&) { return ops::add_rows(arg("add_rows", in, 0, 2), in[1]); }},
      {"reshape",
       [](const auto& in, const auto& at) {
         return ops::reshape(arg("reshape", in, 0, 1), attr_ints(at, "shape"));
       }},
  };
  return table;
}

}  // namespace

Tensor apply_primitive(const std::string& op, const std::vector<Tensor>& inputs,
                       const AttrMap& attrs) {
  const auto& table = registry();
  auto it = table.find(op);
  if (it == table.end()) throw ConfigError("unknown primitive '" + op + "'");
  return it->second(inputs, attrs);
}

const std::vector<std::string>& primitive_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

}  // namespace cycleasr
