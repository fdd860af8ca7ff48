#include "cycleasr/asr.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace cycleasr {

namespace {

std::vector<Real> tensor_values(const Tensor& x) {
  return std::vector<Real>(x.data().begin(), x.data().end());
}

struct BeamItem {
  std::vector<int> tokens;  // characters, then eos once finished
  Real score = 0;
  std::vector<Real> steps;
  AsrModel::DecState state;
  SequenceScorer::State lm;

  bool finished() const { return !tokens.empty() && tokens.back() == Vocab::kEos; }
};

bool beam_order(const BeamItem& a, const BeamItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

bool hyp_order(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

LengthBounds length_bounds(int t_sub, Real min_ratio, Real max_ratio) {
  if (t_sub < 1) throw InputError("length_bounds: subsampled length must be positive");
  LengthBounds b;
  b.max_chars = std::max(
      1, static_cast<int>(std::floor(max_ratio * static_cast<Real>(t_sub) + Real(1e-9))));
  b.min_chars = static_cast<int>(
      std::floor(min_ratio * static_cast<Real>(t_sub) + Real(1e-9)));
  b.min_chars = std::clamp(b.min_chars, 0, b.max_chars);
  return b;
}

AsrModel::AsrModel(const AsrConfig& cfg, const Vocab& vocab, Rng& rng)
    : cfg_(cfg), vocab_(vocab) {
  encoder_ = BlstmStack::create(reg_, "asr.enc", cfg.feat_dim, cfg.enc_layers, rng);
  embed_ = reg_.add_uniform("asr.embed", {vocab_.size(), cfg.embed_dim}, rng);
  att_ = AttentionParams::create(reg_, "asr.att", cfg.dec_hidden, encoder_.out_dim(),
                                 cfg.att_dim, cfg.att_filters, cfg.att_kernel, rng);
  dec_ = LstmParams::create(reg_, "asr.dec", cfg.embed_dim + encoder_.out_dim(),
                            cfg.dec_hidden, rng);
  out_proj_ = Linear::create(reg_, "asr.out", cfg.dec_hidden, vocab_.out_size(), rng);
}

EncoderStates AsrModel::encode(const Tensor& features) const {
  if (features.ndim() != 2 || features.dim(1) != cfg_.feat_dim) {
    throw ShapeError("AsrModel::encode: expected [T," + std::to_string(cfg_.feat_dim) +
                     "] features, got " + shape_string(features.shape()));
  }
  Tensor states = encoder_.apply(features);
  Tensor stop = Tensor::zeros({states.dim(0)});
  stop.data().back() = Real(1);
  return {states, stop};
}

AsrModel::DecState AsrModel::initial_state(int n_keys) const {
  return {LstmState::zeros(cfg_.dec_hidden), AttentionState::initial(n_keys)};
}

Tensor AsrModel::step_log_probs(int c_prev, const DecState& state,
                                const EncoderStates& enc, DecState* next) const {
  if (c_prev < 0 || c_prev >= vocab_.size()) {
    throw InputError("AsrModel::decode_step: token id " + std::to_string(c_prev) +
                     " out of range");
  }
  AttentionResult att = location_attention(state.lstm.h, enc.states, state.att,
                                           AttentionMode::plain, att_);
  Tensor x = ops::concat_cols({ops::pick_row(embed_, c_prev), att.context});
  LstmState lstm = lstm_step(x, state.lstm, dec_);
  Tensor log_probs = ops::log_softmax(out_proj_.apply(lstm.h));
  if (next != nullptr) *next = {std::move(lstm), std::move(att.state)};
  return log_probs;
}

AsrModel::StepResult AsrModel::decode_step(int c_prev, const DecState& state,
                                           const EncoderStates& enc) const {
  StepResult r;
  r.log_probs = step_log_probs(c_prev, state, enc, &r.state);
  return r;
}

Tensor AsrModel::supervised_loss_states(const EncoderStates& enc,
                                        const std::vector<int>& tokens) const {
  check_target_tokens(tokens, vocab_, "supervised_loss");
  DecState state = initial_state(enc.length());
  int c_prev = Vocab::kSos;
  std::vector<Tensor> picked;
  picked.reserve(tokens.size());
  for (int target : tokens) {
    DecState next;
    Tensor lp = step_log_probs(c_prev, state, enc, &next);
    picked.push_back(ops::slice_cols(lp, Vocab::to_out_index(target), 1));
    state = std::move(next);
    c_prev = target;
  }
  return ops::mul_scalar(ops::sum_all(ops::concat_cols(picked)), Real(-1));
}

Tensor AsrModel::supervised_loss(const Tensor& features,
                                 const std::vector<int>& tokens) const {
  return supervised_loss_states(encode(features), tokens);
}

Tensor AsrModel::supervised_loss_batch(const Batch& batch) const {
  Tensor total;
  for (const BatchItem& item : batch.items) {
    if (!item.features.defined() || item.tok_len <= 0) {
      throw InputError("supervised_loss_batch: item " + item.id +
                       " lacks features or text");
    }
    Tensor feats = item.features;
    if (item.feat_len < feats.dim(0)) {
      std::vector<int> keep(static_cast<size_t>(item.feat_len));
      for (int t = 0; t < item.feat_len; ++t) keep[static_cast<size_t>(t)] = t;
      feats = ops::take_rows(feats, keep);
    }
    std::vector<int> tokens(item.tokens.begin(), item.tokens.begin() + item.tok_len);
    tokens.push_back(Vocab::kEos);
    Tensor loss = supervised_loss_states(encode(feats), tokens);
    total = total.defined() ? ops::add(total, loss) : loss;
  }
  if (!total.defined()) throw InputError("supervised_loss_batch: empty batch");
  return total;
}

std::pair<int, int> AsrModel::teacher_forced_counts(const EncoderStates& enc,
                                                    const std::vector<int>& tokens) const {
  check_target_tokens(tokens, vocab_, "teacher_forced_counts");
  NoGradScope guard;
  DecState state = initial_state(enc.length());
  int c_prev = Vocab::kSos;
  int correct = 0;
  for (int target : tokens) {
    DecState next;
    Tensor lp = step_log_probs(c_prev, state, enc, &next);
    const auto& v = lp.data();
    const int best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    if (best == Vocab::to_out_index(target)) ++correct;
    state = std::move(next);
    c_prev = target;
  }
  return {correct, static_cast<int>(tokens.size())};
}

std::vector<Hypothesis> AsrModel::beam_search_states(const EncoderStates& enc,
                                                     const BeamConfig& bc) const {
  if (bc.beam < 1) {
    throw ConfigError("beam_search: beam width must be at least 1");
  }
  if (!(bc.min_ratio > 0) || !(bc.min_ratio < bc.max_ratio) || !(bc.max_ratio <= 1)) {
    throw ConfigError("beam_search: need 0 < min_ratio < max_ratio <= 1");
  }
  NoGradScope guard;
  const LengthBounds bounds = length_bounds(enc.length(), bc.min_ratio, bc.max_ratio);
  const bool fused = bc.fusion != nullptr && bc.fusion_weight != 0;
  const int out_size = vocab_.out_size();

  std::vector<BeamItem> alive(1);
  alive[0].state = initial_state(enc.length());
  if (fused) alive[0].lm = bc.fusion->start();
  std::vector<Hypothesis> finished;

  while (!alive.empty()) {
    std::vector<BeamItem> candidates;
    for (const BeamItem& item : alive) {
      const int c_prev = item.tokens.empty() ? Vocab::kSos : item.tokens.back();
      DecState next;
      std::vector<Real> scores = tensor_values(step_log_probs(c_prev, item.state, enc, &next));
      if (fused) {
        const std::vector<Real> lm = bc.fusion->step_scores(item.lm);
        if (static_cast<int>(lm.size()) != out_size) {
          throw ShapeError("beam_search: fusion scorer returned " +
                           std::to_string(lm.size()) + " scores, expected " +
                           std::to_string(out_size));
        }
        for (int i = 0; i < out_size; ++i) {
          scores[static_cast<size_t>(i)] += bc.fusion_weight * lm[static_cast<size_t>(i)];
        }
      }
      const int chars = static_cast<int>(item.tokens.size());
      for (int idx = 0; idx < out_size; ++idx) {
        const int tok = Vocab::to_token_id(idx);
        const bool is_eos = tok == Vocab::kEos;
        if (chars == bounds.max_chars && !is_eos) continue;
        if (chars < bounds.min_chars && is_eos) continue;
        BeamItem cand = item;  // keeps the parent's lm state until pruning
        cand.tokens.push_back(tok);
        cand.score += scores[static_cast<size_t>(idx)];
        cand.steps.push_back(scores[static_cast<size_t>(idx)]);
        cand.state = next;
        candidates.push_back(std::move(cand));
      }
    }
    std::sort(candidates.begin(), candidates.end(), beam_order);
    if (static_cast<int>(candidates.size()) > bc.beam) {
      candidates.resize(static_cast<size_t>(bc.beam));
    }
    alive.clear();
    for (BeamItem& cand : candidates) {
      if (cand.finished()) {
        finished.push_back({std::move(cand.tokens), cand.score, std::move(cand.steps)});
      } else {
        if (fused) cand.lm = bc.fusion->advance(cand.lm, cand.tokens.back());
        alive.push_back(std::move(cand));
      }
    }
  }

  std::sort(finished.begin(), finished.end(), hyp_order);
  if (static_cast<int>(finished.size()) > bc.beam) {
    finished.resize(static_cast<size_t>(bc.beam));
  }
  return finished;
}

std::vector<Hypothesis> AsrModel::beam_search(const Tensor& features,
                                              const BeamConfig& bc) const {
  NoGradScope guard;
  return beam_search_states(encode(features), bc);
}

std::vector<SampleResult> AsrModel::sample_from_states(const EncoderStates& enc, int n,
                                                       Real temperature, Real max_ratio,
                                                       Rng& rng) const {
  if (n < 1) throw ConfigError("sample_sequences: need at least one sample");
  if (!(temperature > 0)) throw ConfigError("sample_sequences: temperature must be positive");
  if (!(max_ratio > 0) || !(max_ratio <= 1)) {
    throw ConfigError("sample_sequences: need 0 < max_ratio <= 1");
  }
  const int max_chars = length_bounds(enc.length(), Real(0), max_ratio).max_chars;

  std::vector<SampleResult> out;
  out.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    SampleResult res;
    DecState state = initial_state(enc.length());
    int c_prev = Vocab::kSos;
    std::vector<Tensor> picked;
    while (true) {
      DecState next;
      Tensor lp = step_log_probs(c_prev, state, enc, &next);
      if (temperature != Real(1)) {
        lp = ops::log_softmax(ops::mul_scalar(lp, Real(1) / temperature));
      }
      const auto& v = lp.data();
      const Real u = rng.uniform();
      int idx = static_cast<int>(v.size()) - 1;
      Real cum = 0;
      for (size_t i = 0; i < v.size(); ++i) {
        cum += std::exp(v[i]);
        if (u < cum) {
          idx = static_cast<int>(i);
          break;
        }
      }
      picked.push_back(ops::slice_cols(lp, idx, 1));
      const int tok = Vocab::to_token_id(idx);
      state = std::move(next);
      c_prev = tok;
      if (tok == Vocab::kEos) {
        res.tokens.push_back(tok);
        break;
      }
      res.tokens.push_back(tok);
      if (static_cast<int>(res.tokens.size()) == max_chars) {
        // Length limit hit: close the sequence without charging for eos, so
        // outcome probabilities over all reachable sequences sum to one.
        res.tokens.push_back(Vocab::kEos);
        res.truncated = true;
        break;
      }
    }
    res.log_prob = ops::sum_all(ops::concat_cols(picked));
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<SampleResult> AsrModel::sample_sequences(const Tensor& features, int n,
                                                     Real temperature, Real max_ratio,
                                                     Rng& rng) const {
  return sample_from_states(encode(features), n, temperature, max_ratio, rng);
}

}  // namespace cycleasr
