#include "cycleasr/lm.hpp"

#include <cmath>
#include <memory>

#include "cycleasr/optimizer.hpp"

namespace cycleasr {

LmModel::LmModel(const LmConfig& cfg, const Vocab& vocab, Rng& rng)
    : cfg_(cfg), vocab_(vocab) {
  if (cfg.layers < 1) throw ConfigError("LmModel: needs at least one LSTM layer");
  embed_ = reg_.add_uniform("lm.embed", {vocab_.size(), cfg.embed_dim}, rng);
  int in = cfg.embed_dim;
  for (int k = 0; k < cfg.layers; ++k) {
    lstm_.push_back(LstmParams::create(reg_, "lm.l" + std::to_string(k), in, cfg.hidden, rng));
    in = cfg.hidden;
  }
  out_proj_ = Linear::create(reg_, "lm.out", cfg.hidden, vocab_.out_size(), rng);
}

LmModel::StackState LmModel::initial() const {
  StackState s;
  s.layers.assign(lstm_.size(), LstmState::zeros(cfg_.hidden));
  return s;
}

LmModel::StackState LmModel::consume(const StackState& s, int token_id) const {
  if (token_id < 0 || token_id >= vocab_.size()) {
    throw InputError("LmModel: token id " + std::to_string(token_id) + " out of range");
  }
  StackState next;
  next.layers.reserve(lstm_.size());
  Tensor x = ops::pick_row(embed_, token_id);
  for (size_t k = 0; k < lstm_.size(); ++k) {
    LstmState ns = lstm_step(x, s.layers[k], lstm_[k]);
    x = ns.h;
    next.layers.push_back(std::move(ns));
  }
  return next;
}

Tensor LmModel::log_probs(const StackState& s) const {
  return ops::log_softmax(out_proj_.apply(s.layers.back().h));
}

SequenceScorer::State LmModel::start() const {
  NoGradScope guard;
  return {std::make_shared<const StackState>(consume(initial(), Vocab::kSos))};
}

std::vector<Real> LmModel::step_scores(const State& state) const {
  const auto* s = static_cast<const StackState*>(state.impl.get());
  if (s == nullptr) throw StateError("LmModel: scorer state is empty");
  NoGradScope guard;
  Tensor lp = log_probs(*s);
  return lp.data();
}

SequenceScorer::State LmModel::advance(const State& state, int token_id) const {
  const auto* s = static_cast<const StackState*>(state.impl.get());
  if (s == nullptr) throw StateError("LmModel: scorer state is empty");
  NoGradScope guard;
  return {std::make_shared<const StackState>(consume(*s, token_id))};
}

Tensor LmModel::sequence_nll(const std::vector<int>& tokens) const {
  check_target_tokens(tokens, vocab_, "LmModel::sequence_nll");
  StackState s = consume(initial(), Vocab::kSos);
  std::vector<Tensor> picked;
  picked.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    picked.push_back(ops::slice_cols(log_probs(s), Vocab::to_out_index(tokens[i]), 1));
    if (i + 1 < tokens.size()) s = consume(s, tokens[i]);
  }
  return ops::mul_scalar(ops::sum_all(ops::concat_cols(picked)), Real(-1));
}

std::vector<Real> lm_train(LmModel& model, const std::vector<std::string>& texts,
                           const LmTrainConfig& cfg, Rng& rng) {
  if (texts.empty()) throw InputError("lm_train: empty corpus");
  if (cfg.epochs < 1) throw ConfigError("lm_train: epochs must be positive");
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam adam(model.params().tensors(), acfg);
  const Vocab& vocab = model.vocab();

  std::vector<Real> curve;
  curve.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Real total_nll = 0;
    long total_tokens = 0;
    for (int i : shuffled_indices(static_cast<int>(texts.size()), rng)) {
      std::vector<int> tokens = vocab.encode(texts[static_cast<size_t>(i)]);
      tokens.push_back(Vocab::kEos);
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = model.sequence_nll(tokens);
      total_nll += loss.value();
      total_tokens += static_cast<long>(tokens.size());
      adam.step(tape.backward_map(loss));
    }
    curve.push_back(std::exp(total_nll / static_cast<Real>(total_tokens)));
  }
  return curve;
}

Real lm_perplexity(const LmModel& model, const std::vector<std::string>& texts) {
  if (texts.empty()) throw InputError("lm_perplexity: empty corpus");
  NoGradScope guard;
  Real total_nll = 0;
  long total_tokens = 0;
  for (const std::string& text : texts) {
    std::vector<int> tokens = model.vocab().encode(text);
    tokens.push_back(Vocab::kEos);
    total_nll += model.sequence_nll(tokens).value();
    total_tokens += static_cast<long>(tokens.size());
  }
  return std::exp(total_nll / static_cast<Real>(total_tokens));
}

}  // namespace cycleasr
