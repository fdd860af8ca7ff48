#pragma once

#include <string>
#include <vector>

#include "cycleasr/data.hpp"
#include "cycleasr/layers.hpp"
#include "cycleasr/params.hpp"
#include "cycleasr/rng.hpp"
#include "cycleasr/tensor.hpp"
#include "cycleasr/vocab.hpp"

namespace cycleasr {

// Encoder output for one utterance: one state row per subsampled frame and
// the matching end-of-sequence labels (0 everywhere, 1 at the final frame).
struct EncoderStates {
  Tensor states;       // [T', H]
  Tensor stop_labels;  // [T'], constant
  int length() const { return states.dim(0); }

  // Same states with gradients cut, for use as a reconstruction target.
  EncoderStates detach() const { return {states.detach(), stop_labels}; }
};

// A finished decode: character ids followed by eos, the total (possibly
// fusion-weighted) log probability, and its per-token breakdown.
struct Hypothesis {
  std::vector<int> tokens;
  Real score = 0;
  std::vector<Real> per_step_scores;
};

// One ancestral sample: character ids followed by eos and the differentiable
// sum of sampled-token log probabilities. A sample cut off at the length
// limit gets eos appended without a matching log-prob factor, so the
// probabilities of all reachable outcomes still sum to one.
struct SampleResult {
  std::vector<int> tokens;
  Tensor log_prob;
  bool truncated = false;
};

// Per-step score source fused into beam search (shallow fusion). Scores are
// log probabilities over the decoder output classes, out-index order.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  struct State {
    std::shared_ptr<const void> impl;
  };
  virtual State start() const = 0;
  virtual std::vector<Real> step_scores(const State& state) const = 0;
  virtual State advance(const State& state, int token_id) const = 0;
};

struct BeamConfig {
  int beam = 4;
  Real min_ratio = Real(0.2);  // of the subsampled length, floor, in characters
  Real max_ratio = Real(0.8);
  const SequenceScorer* fusion = nullptr;
  Real fusion_weight = 0;
};

// Hypothesis character lengths allowed for a subsampled input length:
// eos may be emitted once min_chars characters exist, and is forced at
// max_chars (at least 1 so decoding always can emit something).
struct LengthBounds {
  int min_chars = 0;
  int max_chars = 1;
};
LengthBounds length_bounds(int t_sub, Real min_ratio, Real max_ratio);

struct AsrConfig {
  int feat_dim = 16;
  std::vector<BlstmLayerSpec> enc_layers{{24, true}, {24, true}};
  int embed_dim = 16;
  int dec_hidden = 32;
  int att_dim = 16;
  int att_filters = 8;
  int att_kernel = 5;
};

// Attention encoder-decoder recognizer. The decoder attends with the
// previous step's state, consumes [embedding; context], and projects to
// log probabilities over eos plus the characters.
class AsrModel {
 public:
  AsrModel(const AsrConfig& cfg, const Vocab& vocab, Rng& rng);

  const AsrConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }
  int subsample_factor() const { return encoder_.subsample_factor(); }

  EncoderStates encode(const Tensor& features) const;

  struct DecState {
    LstmState lstm;
    AttentionState att;
  };
  DecState initial_state(int n_keys) const;

  struct StepResult {
    Tensor log_probs;  // [out_size]
    DecState state;
  };
  StepResult decode_step(int c_prev, const DecState& state, const EncoderStates& enc) const;

  // Teacher-forced negative log likelihood of tokens (characters + eos).
  Tensor supervised_loss(const Tensor& features, const std::vector<int>& tokens) const;
  Tensor supervised_loss_states(const EncoderStates& enc,
                                const std::vector<int>& tokens) const;
  // Sum of per-item losses; every item must carry features and text, and
  // padding must not influence the result.
  Tensor supervised_loss_batch(const Batch& batch) const;

  // Next-token hits and totals given ground-truth history.
  std::pair<int, int> teacher_forced_counts(const EncoderStates& enc,
                                            const std::vector<int>& tokens) const;

  std::vector<Hypothesis> beam_search(const Tensor& features, const BeamConfig& bc) const;
  std::vector<Hypothesis> beam_search_states(const EncoderStates& enc,
                                             const BeamConfig& bc) const;

  std::vector<SampleResult> sample_sequences(const Tensor& features, int n,
                                             Real temperature, Real max_ratio,
                                             Rng& rng) const;
  std::vector<SampleResult> sample_from_states(const EncoderStates& enc, int n,
                                               Real temperature, Real max_ratio,
                                               Rng& rng) const;

 private:
  Tensor step_log_probs(int c_prev, const DecState& state, const EncoderStates& enc,
                        DecState* next) const;

  AsrConfig cfg_;
  Vocab vocab_;
  ParamRegistry reg_;
  BlstmStack encoder_;
  Tensor embed_;  // [vocab size, E]
  AttentionParams att_;
  LstmParams dec_;
  Linear out_proj_;
};

}  // namespace cycleasr
