#pragma once

#include <string>
#include <vector>

#include "cycleasr/asr.hpp"
#include "cycleasr/layers.hpp"
#include "cycleasr/params.hpp"
#include "cycleasr/rng.hpp"
#include "cycleasr/tensor.hpp"
#include "cycleasr/vocab.hpp"

namespace cycleasr {

struct TteConfig {
  int target_dim = 48;  // width of the encoder state rows being predicted
  int embed_dim = 16;
  int conv_layers = 2;
  int conv_filters = 16;
  int conv_kernel = 5;
  int enc_hidden = 12;  // BLSTM halves; text encodings are 2x this wide
  int att_dim = 16;
  int att_filters = 8;
  int att_kernel = 5;
  int prenet_hidden = 16;
  int dec_hidden = 24;
  int dec_layers = 2;
  int postnet_layers = 2;
  int postnet_filters = 16;
  int postnet_kernel = 5;
  Real dropout = Real(0.5);
  Real zoneout = Real(0.1);
};

// Predicted encoder-state sequence: the direct projection (before), the
// postnet-refined version (after), and per-frame end probabilities.
struct TtePrediction {
  Tensor before;      // [T', H], in (-1, 1)
  Tensor after;       // [T', H], in (-1, 1)
  Tensor stop_probs;  // [T'], in (0, 1)
  int length() const { return before.dim(0); }
};

// Text-to-encoder model: characters in, encoder-state sequence out. The
// decoder is driven frame-by-frame by a prenet over the previous target
// frame (teacher forcing) or the model's own output (free running), with
// accumulated-weight location attention over the text encodings.
class TteModel {
 public:
  TteModel(const TteConfig& cfg, const Vocab& vocab, Rng& rng);

  const TteConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

  // Token ids (typically characters plus the trailing eos) -> [L, 2*enc_hidden].
  Tensor encode_text(const std::vector<int>& tokens) const;

  // Predicts exactly target.length() frames, feeding the true previous
  // target row to the prenet. rng == nullptr runs deterministically
  // (dropout off, zoneout carrying the new state); otherwise prenet dropout
  // and decoder zoneout are live.
  TtePrediction decode_teacher_forced(const std::vector<int>& tokens,
                                      const EncoderStates& target, Rng* rng) const;

  // Autoregressive generation feeding back the model's own refined frames;
  // halts once a stop probability exceeds the threshold or at max_frames.
  // Prenet dropout stays live (rng required); zoneout is off.
  TtePrediction free_run(const std::vector<int>& tokens, Real stop_threshold,
                         int max_frames, Rng& rng) const;

 private:
  struct ConvLayer {
    Tensor w;  // [K*C, F]
  };
  enum class RunMode { train, frozen, generate };
  struct DecCore {
    std::vector<LstmState> lstm;
    AttentionState att;
  };

  DecCore initial_core(int n_keys) const;
  Tensor prenet_apply(const Tensor& frame, RunMode mode, Rng* rng) const;
  Tensor postnet_apply(const Tensor& q_rows) const;
  // One decoder step; returns q_t and advances core.
  Tensor dec_step(const Tensor& prev_frame, const Tensor& keys, DecCore& core,
                  RunMode mode, Rng* rng) const;

  TteConfig cfg_;
  Vocab vocab_;
  ParamRegistry reg_;
  Tensor embed_;  // [vocab size, E]
  std::vector<ConvLayer> enc_convs_;
  BlstmStack enc_blstm_;
  AttentionParams att_;
  Linear prenet1_, prenet2_;
  std::vector<LstmParams> dec_;
  Linear frame_proj_;  // shared by the before and after projections
  std::vector<ConvLayer> postnet_;
  Linear stop_proj_;
};

// MSE(after) + MSE(before) + L1(after) + L1(before) + mean BCE of the stop
// probabilities against the target's stop labels.
Tensor tte_loss(const TtePrediction& pred, const EncoderStates& target);

struct TtePair {
  std::vector<int> tokens;  // characters plus eos
  EncoderStates target;     // constant (no gradients flow into it)
};

struct TteTrainConfig {
  int epochs = 30;
  Real lr = Real(1e-3);
};

// Minimizes the mean loss over the pairs. The returned curve holds the
// deterministic-mode mean loss before training and after each epoch
// (epochs + 1 entries).
std::vector<Real> tte_train(TteModel& model, const std::vector<TtePair>& pairs,
                            const TteTrainConfig& cfg, Rng& rng);

}  // namespace cycleasr
