#include "cycleasr/layers.hpp"

#include <algorithm>

namespace cycleasr {

Linear Linear::create(ParamRegistry& reg, const std::string& name, int in, int out,
                      Rng& rng) {
  Linear l;
  l.w = reg.add_uniform(name + ".w", {in, out}, rng);
  l.b = reg.add_zeros(name + ".b", {out});
  return l;
}

Tensor Linear::apply(const Tensor& x) const {
  Tensor y = ops::matmul(x, w);
  if (y.ndim() == 1) return ops::add(y, b);
  return ops::add_rows(y, b);
}

LstmParams LstmParams::create(ParamRegistry& reg, const std::string& name, int in,
                              int hidden, Rng& rng, Real forget_bias) {
  LstmParams p;
  p.hidden = hidden;
  p.wx = reg.add_uniform(name + ".wx", {in, 4 * hidden}, rng);
  p.wh = reg.add_uniform(name + ".wh", {hidden, 4 * hidden}, rng);
  Tensor b = Tensor::zeros({4 * hidden});
  for (int i = hidden; i < 2 * hidden; ++i) b.data()[i] = forget_bias;
  p.b = reg.add(name + ".b", b);
  return p;
}

LstmState LstmState::zeros(int hidden) {
  return {Tensor::zeros({hidden}), Tensor::zeros({hidden})};
}

LstmState lstm_step(const Tensor& x, const LstmState& s, const LstmParams& p) {
  if (x.ndim() != 1 || x.dim(0) != p.wx.dim(0)) {
    throw ShapeError("lstm_step: input " + shape_string(x.shape()) + " does not match wx " +
                     shape_string(p.wx.shape()));
  }
  if (s.h.dim(0) != p.hidden || s.c.dim(0) != p.hidden) {
    throw ShapeError("lstm_step: state size does not match cell size " +
                     std::to_string(p.hidden));
  }
  const int H = p.hidden;
  Tensor gates = ops::add(ops::add(ops::matmul(x, p.wx), ops::matmul(s.h, p.wh)), p.b);
  Tensor i = ops::sigmoid(ops::slice_cols(gates, 0, H));
  Tensor f = ops::sigmoid(ops::slice_cols(gates, H, H));
  Tensor g = ops::tanh(ops::slice_cols(gates, 2 * H, H));
  Tensor o = ops::sigmoid(ops::slice_cols(gates, 3 * H, H));
  Tensor c = ops::add(ops::mul(f, s.c), ops::mul(i, g));
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

BlstmStack BlstmStack::create(ParamRegistry& reg, const std::string& name, int input_dim,
                              const std::vector<BlstmLayerSpec>& specs, Rng& rng) {
  if (specs.empty()) throw ConfigError("BlstmStack: needs at least one layer");
  BlstmStack stack;
  int in = input_dim;
  for (size_t k = 0; k < specs.size(); ++k) {
    Layer layer;
    const std::string base = name + ".l" + std::to_string(k);
    layer.fwd = LstmParams::create(reg, base + ".fwd", in, specs[k].hidden, rng);
    layer.bwd = LstmParams::create(reg, base + ".bwd", in, specs[k].hidden, rng);
    layer.subsample = specs[k].subsample;
    stack.layers.push_back(std::move(layer));
    in = 2 * specs[k].hidden;
  }
  return stack;
}

int BlstmStack::subsample_factor() const {
  int f = 1;
  for (const Layer& l : layers) {
    if (l.subsample) f *= 2;
  }
  return f;
}

Tensor BlstmStack::apply(const Tensor& seq) const {
  if (seq.ndim() != 2) {
    throw ShapeError("BlstmStack: expects a [T,D] sequence, got " + shape_string(seq.shape()));
  }
  if (seq.dim(0) < subsample_factor()) {
    throw InputError("BlstmStack: sequence of length " + std::to_string(seq.dim(0)) +
                     " is shorter than the subsampling factor " +
                     std::to_string(subsample_factor()));
  }
  Tensor cur = seq;
  for (const Layer& layer : layers) {
    const int T = cur.dim(0);
    std::vector<Tensor> fwd_h(static_cast<size_t>(T)), bwd_h(static_cast<size_t>(T));
    LstmState s = LstmState::zeros(layer.fwd.hidden);
    for (int t = 0; t < T; ++t) {
      s = lstm_step(ops::pick_row(cur, t), s, layer.fwd);
      fwd_h[static_cast<size_t>(t)] = s.h;
    }
    s = LstmState::zeros(layer.bwd.hidden);
    for (int t = T - 1; t >= 0; --t) {
      s = lstm_step(ops::pick_row(cur, t), s, layer.bwd);
      bwd_h[static_cast<size_t>(t)] = s.h;
    }
    std::vector<Tensor> rows(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      rows[static_cast<size_t>(t)] =
          ops::concat_cols({fwd_h[static_cast<size_t>(t)], bwd_h[static_cast<size_t>(t)]});
    }
    cur = ops::stack_rows(rows);
    if (layer.subsample) {
      std::vector<int> keep;
      for (int t = 0; t < T; t += 2) keep.push_back(t);
      cur = ops::take_rows(cur, keep);
    }
  }
  return cur;
}

AttentionState AttentionState::initial(int n_keys) {
  if (n_keys < 1) throw InputError("AttentionState: needs at least one key");
  Tensor prev = Tensor::full({n_keys}, Real(1) / static_cast<Real>(n_keys));
  return {prev, Tensor::zeros({n_keys})};
}

AttentionParams AttentionParams::create(ParamRegistry& reg, const std::string& name,
                                        int query_dim, int key_dim, int att_dim, int filters,
                                        int kernel, Rng& rng) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("AttentionParams: kernel width must be odd, got " +
                      std::to_string(kernel));
  }
  AttentionParams p;
  p.query_proj = Linear::create(reg, name + ".query", query_dim, att_dim, rng);
  p.key_proj = Linear::create(reg, name + ".key", key_dim, att_dim, rng);
  p.loc_filters = reg.add_uniform(name + ".loc_filters", {kernel, filters}, rng);
  p.loc_proj = Linear::create(reg, name + ".loc", filters, att_dim, rng);
  p.score_v = reg.add_uniform(name + ".score_v", {att_dim}, rng);
  p.kernel = kernel;
  return p;
}

AttentionResult location_attention(const Tensor& query, const Tensor& keys,
                                   const AttentionState& state, AttentionMode mode,
                                   const AttentionParams& p) {
  if (keys.ndim() != 2 || keys.dim(0) < 1) {
    throw InputError("location_attention: keys must be a nonempty [T,H] matrix");
  }
  const int T = keys.dim(0);
  if (state.prev.dim(0) != T || state.accum.dim(0) != T) {
    throw ShapeError("location_attention: state length " + shape_string(state.prev.shape()) +
                     " does not match " + std::to_string(T) + " keys");
  }
  const Tensor& loc_src = mode == AttentionMode::accumulated ? state.accum : state.prev;
  Tensor loc_feat = ops::conv1d(ops::reshape(loc_src, {T, 1}), p.loc_filters, p.kernel);
  Tensor hidden = ops::add(p.key_proj.apply(keys), p.loc_proj.apply(loc_feat));
  hidden = ops::add_rows(hidden, p.query_proj.apply(query));
  Tensor scores = ops::matmul(ops::tanh(hidden), p.score_v);
  Tensor weights = ops::softmax(scores);
  Tensor context = ops::matmul(weights, keys);
  AttentionState next{weights, ops::add(state.accum, weights)};
  return {weights, context, std::move(next)};
}

Tensor seqnorm(const Tensor& x, Real eps) {
  if (x.ndim() != 2) {
    throw ShapeError("seqnorm: expects a [L,C] sequence, got " + shape_string(x.shape()));
  }
  const int L = x.dim(0), C = x.dim(1);
  Tensor avg_weights = Tensor::full({L}, Real(1) / static_cast<Real>(L));
  Tensor mean = ops::matmul(avg_weights, x);                       // [C]
  Tensor centered = ops::add_rows(x, ops::mul_scalar(mean, -1));   // [L,C]
  Tensor var = ops::matmul(avg_weights, ops::mul(centered, centered));
  Tensor inv_std = ops::rsqrt(ops::add_scalar(var, eps));          // [C]
  Tensor ones_col = Tensor::full({L, 1}, Real(1));
  Tensor scale = ops::matmul(ones_col, ops::reshape(inv_std, {1, C}));
  return ops::mul(centered, scale);
}

Tensor stochastic_regularizer(const Tensor& x, RegKind kind, Real rate, Rng& rng,
                              bool frozen, const Tensor* prev) {
  if (rate < 0 || rate > 1 || (kind == RegKind::dropout && rate == 1)) {
    throw ConfigError("stochastic_regularizer: rate " + std::to_string(rate) +
                      " out of range");
  }
  if (kind == RegKind::dropout) {
    if (frozen || rate == 0) return x;
    Tensor mask = Tensor::zeros(x.shape());
    const Real keep_scale = Real(1) / (Real(1) - rate);
    for (auto& v : mask.data()) v = rng.bernoulli(rate) ? Real(0) : keep_scale;
    return ops::mul(x, mask);
  }
  // zoneout
  if (prev == nullptr || !prev->defined()) {
    throw InputError("stochastic_regularizer: zoneout requires the previous state");
  }
  if (prev->shape() != x.shape()) {
    throw ShapeError("stochastic_regularizer: zoneout state shapes differ " +
                     shape_string(prev->shape()) + " vs " + shape_string(x.shape()));
  }
  if (frozen || rate == 0) return x;
  Tensor keep_prev = Tensor::zeros(x.shape());
  Tensor keep_new = Tensor::zeros(x.shape());
  for (int i = 0; i < x.numel(); ++i) {
    const bool carry = rng.bernoulli(rate);
    keep_prev.data()[i] = carry ? Real(1) : Real(0);
    keep_new.data()[i] = carry ? Real(0) : Real(1);
  }
  return ops::add(ops::mul(*prev, keep_prev), ops::mul(x, keep_new));
}

}  // namespace cycleasr
