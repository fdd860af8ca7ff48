#pragma once

#include <string>
#include <vector>

#include "cycleasr/ops.hpp"
#include "cycleasr/params.hpp"
#include "cycleasr/rng.hpp"
#include "cycleasr/tensor.hpp"

namespace cycleasr {

// y = x W + b, applied to a single vector or row-wise to a matrix.
struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Linear create(ParamRegistry& reg, const std::string& name, int in, int out,
                       Rng& rng);
  Tensor apply(const Tensor& x) const;
  int out_dim() const { return w.dim(1); }
};

// Fused gate parameters, gate order i|f|g|o along the 4H axis. The forget
// gate bias starts at 1.0 so early training does not wipe the cell state.
struct LstmParams {
  Tensor wx;  // [in, 4H]
  Tensor wh;  // [H, 4H]
  Tensor b;   // [4H]
  int hidden = 0;

  static LstmParams create(ParamRegistry& reg, const std::string& name, int in, int hidden,
                           Rng& rng, Real forget_bias = Real(1));
};

struct LstmState {
  Tensor h;  // [H]
  Tensor c;  // [H]
  static LstmState zeros(int hidden);
};

LstmState lstm_step(const Tensor& x, const LstmState& s, const LstmParams& p);

// Bidirectional LSTM stack; a layer marked subsample keeps frames 0,2,4,...
// of its output, so two such layers shrink T to ceil(ceil(T/2)/2).
struct BlstmLayerSpec {
  int hidden = 0;
  bool subsample = false;
};

struct BlstmStack {
  struct Layer {
    LstmParams fwd, bwd;
    bool subsample = false;
  };
  std::vector<Layer> layers;

  static BlstmStack create(ParamRegistry& reg, const std::string& name, int input_dim,
                           const std::vector<BlstmLayerSpec>& specs, Rng& rng);
  // [T, D] -> [T', 2*hidden_last]
  Tensor apply(const Tensor& seq) const;
  int out_dim() const { return 2 * layers.back().fwd.hidden; }
  int subsample_factor() const;
};

// Additive attention over key vectors whose scores also see a 1-D
// convolution of earlier attention weights: the previous step's weights in
// plain mode, their running sum in accumulated mode.
enum class AttentionMode { plain, accumulated };

struct AttentionState {
  Tensor prev;   // [T'] last weight vector (uniform before the first step)
  Tensor accum;  // [T'] sum of all weight vectors so far (zero initially)
  static AttentionState initial(int n_keys);
};

struct AttentionParams {
  Linear query_proj;  // [Hq -> A]
  Linear key_proj;    // [Hk -> A]
  Tensor loc_filters; // conv weights [K, F] over the single weight channel
  Linear loc_proj;    // [F -> A]
  Tensor score_v;     // [A]
  int kernel = 5;

  static AttentionParams create(ParamRegistry& reg, const std::string& name, int query_dim,
                                int key_dim, int att_dim, int filters, int kernel, Rng& rng);
};

struct AttentionResult {
  Tensor weights;  // [T'] probability distribution over keys
  Tensor context;  // [Hk]
  AttentionState state;
};

AttentionResult location_attention(const Tensor& query, const Tensor& keys,
                                   const AttentionState& state, AttentionMode mode,
                                   const AttentionParams& p);

// Per-channel normalization over the frames of one sequence ([L, C]):
// each column is centered and scaled to unit variance. Stands in for batch
// normalization at batch size one.
Tensor seqnorm(const Tensor& x, Real eps = Real(1e-5));

enum class RegKind { dropout, zoneout };

// Dropout uses inverted scaling (kept units multiplied by 1/(1-rate)).
// Zoneout copies each unit from prev with probability rate. frozen=true
// turns dropout into the identity and zoneout into "take the new value".
Tensor stochastic_regularizer(const Tensor& x, RegKind kind, Real rate, Rng& rng,
                              bool frozen, const Tensor* prev = nullptr);

}  // namespace cycleasr
