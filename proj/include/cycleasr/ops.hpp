#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "cycleasr/tensor.hpp"

namespace cycleasr {
namespace ops {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise with a scalar attribute.
Tensor add_scalar(const Tensor& x, Real c);
Tensor mul_scalar(const Tensor& x, Real c);

// Elementwise unary.
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor rsqrt(const Tensor& x);  // 1/sqrt(x), x > 0

// Row-wise normalizations: 1-D tensors are one row, 2-D apply per row.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// matmul dispatches on ranks: [m,k]x[k,n] -> [m,n]; [k]x[k,n] -> [n] (row
// vector times matrix); [m,k]x[k] -> [m] (matrix times column vector).
Tensor matmul(const Tensor& a, const Tensor& b);

// Same-length 1-D convolution with symmetric zero padding. seq is [L,C],
// w is [K*C, F] (tap-major rows: tap d, channel c at row d*C+c), out [L,F].
// K must be odd.
Tensor conv1d(const Tensor& seq, const Tensor& w, int kernel);

// Concatenate along the last axis: all 1-D, or all 2-D with equal rows.
Tensor concat_cols(const std::vector<Tensor>& xs);
// Stack 1-D tensors of equal length into a [n, c] matrix.
Tensor stack_rows(const std::vector<Tensor>& xs);

// Row gather from a 2-D tensor; duplicate indices accumulate gradient.
// Serves as embedding lookup and frame subsampling.
Tensor take_rows(const Tensor& x, const std::vector<int>& indices);
// Single row of a 2-D tensor as a 1-D tensor.
Tensor pick_row(const Tensor& x, int index);
// Contiguous slice along the last axis (columns of 2-D, elements of 1-D).
Tensor slice_cols(const Tensor& x, int begin, int count);

// Reductions to scalar.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Mean losses over all elements.
Tensor sq_err(const Tensor& a, const Tensor& b);   // mean (a-b)^2
Tensor abs_err(const Tensor& a, const Tensor& b);  // mean |a-b|
// Mean binary cross entropy -[t log p + (1-t) log(1-p)] with p clamped to
// [1e-12, 1-1e-12] so the logs stay finite.
Tensor bce_loss(const Tensor& p, const Tensor& t);

// Broadcast add of a length-c vector to every row of a [r,c] matrix.
Tensor add_rows(const Tensor& x, const Tensor& v);

// Same data, new shape (element count must match).
Tensor reshape(const Tensor& x, const std::vector<int>& shape);

}  // namespace ops

// String-keyed dispatch over the primitives above, used by generic
// property tests. Attribute names follow the parameter names (c, kernel,
// indices, index, begin, count, shape).
using Attr = std::variant<Real, int, std::vector<int>>;
using AttrMap = std::map<std::string, Attr>;

Tensor apply_primitive(const std::string& op, const std::vector<Tensor>& inputs,
                       const AttrMap& attrs = {});
const std::vector<std::string>& primitive_names();

}  // namespace cycleasr
