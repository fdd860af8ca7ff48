#pragma once

#include <string>
#include <vector>

#include "cycleasr/asr.hpp"
#include "cycleasr/layers.hpp"
#include "cycleasr/params.hpp"
#include "cycleasr/rng.hpp"
#include "cycleasr/vocab.hpp"

namespace cycleasr {

struct LmConfig {
  int embed_dim = 16;
  int hidden = 32;
  int layers = 1;
};

// Character-level LSTM language model over the decoder output classes
// (eos plus the characters), used both standalone and as the shallow-fusion
// scorer inside beam search.
class LmModel : public SequenceScorer {
 public:
  LmModel(const LmConfig& cfg, const Vocab& vocab, Rng& rng);

  const LmConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

  // SequenceScorer: state after consuming sos / the given history.
  State start() const override;
  std::vector<Real> step_scores(const State& state) const override;
  State advance(const State& state, int token_id) const override;

  // Teacher-forced negative log likelihood of (characters + eos),
  // differentiable; matches the sum of step_scores picks within fp error.
  Tensor sequence_nll(const std::vector<int>& tokens) const;

 private:
  struct StackState {
    std::vector<LstmState> layers;
  };
  StackState initial() const;
  StackState consume(const StackState& s, int token_id) const;
  Tensor log_probs(const StackState& s) const;

  LmConfig cfg_;
  Vocab vocab_;
  ParamRegistry reg_;
  Tensor embed_;  // [vocab size, E]
  std::vector<LstmParams> lstm_;
  Linear out_proj_;
};

struct LmTrainConfig {
  int epochs = 5;
  Real lr = Real(1e-3);
};

// Per-epoch training perplexities, exp(total nll / total predicted tokens).
std::vector<Real> lm_train(LmModel& model, const std::vector<std::string>& texts,
                           const LmTrainConfig& cfg, Rng& rng);

Real lm_perplexity(const LmModel& model, const std::vector<std::string>& texts);

}  // namespace cycleasr
