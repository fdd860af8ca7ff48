#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "cycleasr/asr.hpp"
#include "cycleasr/gradcheck.hpp"
#include "cycleasr/optimizer.hpp"

using namespace cycleasr;

namespace {

AsrConfig tiny_config() {
  AsrConfig cfg;
  cfg.feat_dim = 4;
  cfg.enc_layers = {{3, true}, {3, true}};
  cfg.embed_dim = 4;
  cfg.dec_hidden = 5;
  cfg.att_dim = 4;
  cfg.att_filters = 2;
  cfg.att_kernel = 3;
  return cfg;
}

Tensor random_features(int t, int d, Rng& rng) {
  Tensor x = Tensor::zeros({t, d});
  for (auto& v : x.data()) v = rng.uniform(-1, 1);
  return x;
}

void fill_zero(ParamRegistry& reg) {
  for (Tensor& t : reg.tensors()) {
    for (auto& v : t.data()) v = 0;
  }
}

// Teacher-forced per-step log probabilities along a fixed token path,
// optionally shifted by a constant per-class additive score.
std::vector<Real> chain_scores(const AsrModel& model, const EncoderStates& enc,
                               const std::vector<int>& tokens,
                               const std::vector<Real>* addend = nullptr,
                               Real addend_weight = 0) {
  NoGradScope guard;
  AsrModel::DecState state = model.initial_state(enc.length());
  int c_prev = Vocab::kSos;
  std::vector<Real> out;
  for (int tok : tokens) {
    AsrModel::StepResult r = model.decode_step(c_prev, state, enc);
    const int idx = Vocab::to_out_index(tok);
    Real s = r.log_probs.at(idx);
    if (addend != nullptr) s += addend_weight * (*addend)[static_cast<size_t>(idx)];
    out.push_back(s);
    state = r.state;
    c_prev = tok;
  }
  return out;
}

Real chain_total(const AsrModel& model, const EncoderStates& enc,
                 const std::vector<int>& tokens, const std::vector<Real>* addend = nullptr,
                 Real addend_weight = 0) {
  Real total = 0;
  for (Real s : chain_scores(model, enc, tokens, addend, addend_weight)) total += s;
  return total;
}

// Every character sequence with length in [lo, hi] (eos appended), scored
// teacher-forced; the best-first order matches the beam tie-breaking.
std::vector<Hypothesis> enumerate_hypotheses(const AsrModel& model, const EncoderStates& enc,
                                             int lo, int hi,
                                             const std::vector<Real>* addend = nullptr,
                                             Real addend_weight = 0) {
  std::vector<std::vector<int>> prefixes = {{}};
  std::vector<Hypothesis> out;
  for (int len = 0; len <= hi; ++len) {
    if (len >= lo) {
      for (const auto& prefix : prefixes) {
        std::vector<int> tokens = prefix;
        tokens.push_back(Vocab::kEos);
        Hypothesis h;
        h.tokens = tokens;
        h.per_step_scores = chain_scores(model, enc, tokens, addend, addend_weight);
        for (Real s : h.per_step_scores) h.score += s;
        out.push_back(std::move(h));
      }
    }
    if (len == hi) break;
    std::vector<std::vector<int>> next;
    for (const auto& prefix : prefixes) {
      for (int c = Vocab::kFirstChar; c < model.vocab().size(); ++c) {
        auto longer = prefix;
        longer.push_back(c);
        next.push_back(std::move(longer));
      }
    }
    prefixes = std::move(next);
  }
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return out;
}

// State-independent fusion scores: a fixed vector for every step.
class ConstantScorer : public SequenceScorer {
 public:
  explicit ConstantScorer(std::vector<Real> scores) : scores_(std::move(scores)) {}
  State start() const override { return {}; }
  std::vector<Real> step_scores(const State&) const override { return scores_; }
  State advance(const State& s, int) const override { return s; }

 private:
  std::vector<Real> scores_;
};

}  // namespace

TEST_CASE("length bounds floor the ratio products") {
  LengthBounds b = length_bounds(10, Real(0.2), Real(0.8));
  CHECK(b.min_chars == 2);
  CHECK(b.max_chars == 8);
  b = length_bounds(4, Real(0.2), Real(0.8));
  CHECK(b.min_chars == 0);
  CHECK(b.max_chars == 3);
  b = length_bounds(1, Real(0.2), Real(0.8));
  CHECK(b.min_chars == 0);
  CHECK(b.max_chars == 1);  // never below one character
  b = length_bounds(5, Real(1), Real(1));
  CHECK(b.min_chars == 5);
  CHECK(b.max_chars == 5);
  CHECK_THROWS_AS(length_bounds(0, Real(0.2), Real(0.8)), InputError);
}

TEST_CASE("encode subsamples, labels the last frame, and is deterministic") {
  Rng rng(1);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(8, 4, rng);
  EncoderStates enc = model.encode(x);
  CHECK(enc.length() == 2);
  CHECK(enc.states.dim(1) == 6);
  CHECK(enc.stop_labels.at(0) == doctest::Approx(0));
  CHECK(enc.stop_labels.at(1) == doctest::Approx(1));

  EncoderStates again = model.encode(x);
  for (int i = 0; i < enc.states.numel(); ++i) {
    CHECK(enc.states.data()[static_cast<size_t>(i)] ==
          again.states.data()[static_cast<size_t>(i)]);
  }
  CHECK_THROWS_AS(model.encode(random_features(3, 4, rng)), InputError);
  CHECK_THROWS_AS(model.encode(random_features(8, 5, rng)), ShapeError);

  Rng rng2(1);
  AsrModel zero(tiny_config(), vocab, rng2);
  fill_zero(zero.params());
  EncoderStates silent = zero.encode(x);
  for (Real v : silent.states.data()) CHECK(v == doctest::Approx(0));
}

TEST_CASE("decode_step gives normalized distributions, uniform at zero weights") {
  Rng rng(2);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  EncoderStates enc = model.encode(random_features(8, 4, rng));
  AsrModel::StepResult r = model.decode_step(Vocab::kSos, model.initial_state(2), enc);
  REQUIRE(r.log_probs.numel() == vocab.out_size());
  Real total = 0;
  for (Real v : r.log_probs.data()) total += std::exp(v);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(model.decode_step(-1, model.initial_state(2), enc), InputError);
  CHECK_THROWS_AS(model.decode_step(vocab.size(), model.initial_state(2), enc), InputError);

  Rng rng2(2);
  AsrModel zero(tiny_config(), vocab, rng2);
  fill_zero(zero.params());
  EncoderStates enc0 = zero.encode(random_features(8, 4, rng));
  AsrModel::StepResult u = zero.decode_step(Vocab::kSos, zero.initial_state(2), enc0);
  for (Real v : u.log_probs.data()) {
    CHECK(v == doctest::Approx(-std::log(Real(vocab.out_size()))).epsilon(1e-12));
  }
}

TEST_CASE("supervised_loss equals the chained decode_step path") {
  Rng rng(3);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(12, 4, rng);
  EncoderStates enc = model.encode(x);
  std::vector<int> tokens = {vocab.id_of('a'), vocab.id_of('b'), vocab.id_of('a'),
                             Vocab::kEos};
  Tensor loss = model.supervised_loss(x, tokens);
  CHECK(loss.at(0) > 0);
  const Real chained = chain_total(model, enc, tokens);
  CHECK(loss.at(0) == doctest::Approx(-chained).epsilon(1e-9));
  // Factorized path probability against the exponentiated loss.
  Real product = 1;
  for (Real s : chain_scores(model, enc, tokens)) product *= std::exp(s);
  CHECK(product == doctest::Approx(std::exp(-loss.at(0))).epsilon(1e-9));

  CHECK_THROWS_AS(model.supervised_loss(x, {}), InputError);
  CHECK_THROWS_AS(model.supervised_loss(x, {vocab.id_of('a')}), InputError);
  CHECK_THROWS_AS(model.supervised_loss(x, {Vocab::kEos, Vocab::kEos}), InputError);
  CHECK_THROWS_AS(model.supervised_loss(x, {vocab.id_of('a'), Vocab::kPad, Vocab::kEos}),
                  InputError);
}

TEST_CASE("supervised_loss is length times log vocab at zero weights") {
  Rng rng(4);
  Vocab vocab = Vocab::from_chars("ab");  // output classes: eos, a, b
  AsrModel model(tiny_config(), vocab, rng);
  fill_zero(model.params());
  Tensor x = random_features(8, 4, rng);
  std::vector<int> tokens = {vocab.id_of('a'), vocab.id_of('b'), Vocab::kEos};
  Tensor loss = model.supervised_loss(x, tokens);
  CHECK(loss.at(0) == doctest::Approx(3 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("batched supervised loss equals the sum of unbatched losses") {
  Rng rng(5);
  std::vector<Utterance> utts;
  const char* texts[3] = {"ab", "ba a", "a"};
  for (int i = 0; i < 3; ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.features = random_features(8 + 4 * i, 4, rng);
    u.text = texts[i];
    utts.push_back(std::move(u));
  }
  // The texts use a space, so the model needs the full data vocabulary.
  Vocab data_vocab = Vocab::from_chars("ab ");
  Rng rng2(5);
  AsrModel model2(tiny_config(), data_vocab, rng2);
  Real unbatched = 0;
  for (const auto& u : utts) {
    std::vector<int> tokens;
    for (char c : *u.text) tokens.push_back(data_vocab.id_of(c));
    tokens.push_back(Vocab::kEos);
    unbatched += model2.supervised_loss(u.features, tokens).at(0);
  }
  Real batched = 0;
  for (const Batch& batch : batchify(utts, 2, data_vocab)) {
    batched += model2.supervised_loss_batch(batch).at(0);
  }
  CHECK(batched == doctest::Approx(unbatched).epsilon(1e-9));

  Batch empty;
  CHECK_THROWS_AS(model2.supervised_loss_batch(empty), InputError);
  Batch text_only;
  BatchItem item;
  item.id = "t";
  item.tokens = {data_vocab.id_of('a')};
  item.tok_len = 1;
  text_only.items.push_back(item);
  CHECK_THROWS_AS(model2.supervised_loss_batch(text_only), InputError);
}

TEST_CASE("supervised loss gradient check on a tiny instance") {
  AsrConfig cfg = tiny_config();
  cfg.enc_layers = {{3, true}};  // subsampling factor 2 keeps the test small
  Rng rng(3);
  Vocab vocab = Vocab::from_chars("a");
  AsrModel model(cfg, vocab, rng);
  // The default init scale leaves some true gradients near the relative
  // error floor, where finite-difference noise dominates; larger weights
  // keep every component well above it.
  for (Tensor& t : model.params().tensors()) {
    for (auto& v : t.data()) v = rng.uniform(-1, 1);
  }
  Tensor x = random_features(3, 4, rng);
  std::vector<int> tokens = {vocab.id_of('a'), Vocab::kEos};
  auto params = model.params().items();
  params.emplace_back("features", x);
  GradReport rep = grad_check([&]() { return model.supervised_loss(x, tokens); }, params);
  CHECK(rep.max_rel_err() < 1e-4);
}

TEST_CASE("fifty optimizer steps overfit one utterance") {
  Rng rng(7);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(12, 4, rng);
  std::vector<int> tokens = {vocab.id_of('a'), vocab.id_of('b'), Vocab::kEos};
  AdamConfig acfg;
  acfg.lr = Real(0.05);
  Adam adam(model.params().tensors(), acfg);
  Real first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = model.supervised_loss(x, tokens);
    if (step == 0) first = loss.at(0);
    last = loss.at(0);
    adam.step(tape.backward_map(loss));
  }
  CHECK(last < Real(0.5) * first);
}

TEST_CASE("teacher forced counts track the argmax prediction") {
  Rng rng(8);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  fill_zero(model.params());
  // Bias the output projection toward 'a' so every step predicts it.
  Tensor bias = model.params().find("asr.out.b");
  bias.data()[static_cast<size_t>(Vocab::to_out_index(vocab.id_of('a')))] = 5;
  EncoderStates enc = model.encode(random_features(8, 4, rng));
  auto [hits, total] = model.teacher_forced_counts(
      enc, {vocab.id_of('a'), vocab.id_of('b'), Vocab::kEos});
  CHECK(total == 3);
  CHECK(hits == 1);
}

TEST_CASE("beam width one is greedy argmax decoding") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Vocab vocab = Vocab::from_chars("ab");
    AsrModel model(tiny_config(), vocab, rng);
    Tensor x = random_features(16, 4, rng);
    EncoderStates enc = model.encode(x);
    BeamConfig bc;
    bc.beam = 1;
    bc.min_ratio = Real(0.3);
    bc.max_ratio = Real(0.8);
    auto hyps = model.beam_search_states(enc, bc);
    REQUIRE(hyps.size() == 1);

    const LengthBounds bounds = length_bounds(enc.length(), bc.min_ratio, bc.max_ratio);
    NoGradScope guard;
    AsrModel::DecState state = model.initial_state(enc.length());
    int c_prev = Vocab::kSos;
    std::vector<int> greedy;
    Real greedy_score = 0;
    while (true) {
      AsrModel::StepResult r = model.decode_step(c_prev, state, enc);
      const int chars = static_cast<int>(greedy.size());
      int best = -1;
      for (int idx = 0; idx < vocab.out_size(); ++idx) {
        const bool is_eos = Vocab::to_token_id(idx) == Vocab::kEos;
        if (chars == bounds.max_chars && !is_eos) continue;
        if (chars < bounds.min_chars && is_eos) continue;
        if (best < 0 || r.log_probs.at(idx) > r.log_probs.at(best)) best = idx;
      }
      greedy_score += r.log_probs.at(best);
      greedy.push_back(Vocab::to_token_id(best));
      if (greedy.back() == Vocab::kEos) break;
      state = r.state;
      c_prev = greedy.back();
    }
    CHECK(hyps[0].tokens == greedy);
    CHECK(hyps[0].score == doctest::Approx(greedy_score).epsilon(1e-9));
  }
}

TEST_CASE("wide beam equals exhaustive enumeration") {
  Rng rng(9);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(16, 4, rng);
  EncoderStates enc = model.encode(x);
  REQUIRE(enc.length() == 4);

  BeamConfig bc;
  bc.beam = 27;
  bc.min_ratio = Real(0.1);  // min 0 characters
  bc.max_ratio = Real(0.75);  // max 3 characters
  auto hyps = model.beam_search_states(enc, bc);
  auto oracle = enumerate_hypotheses(model, enc, 0, 3);
  REQUIRE(oracle.size() == 15);  // 1 + 2 + 4 + 8 terminated sequences
  REQUIRE(hyps.size() == 15);
  for (size_t i = 0; i < oracle.size(); ++i) {
    CHECK(hyps[i].tokens == oracle[i].tokens);
    CHECK(hyps[i].score == doctest::Approx(oracle[i].score).epsilon(1e-9));
    REQUIRE(hyps[i].per_step_scores.size() == oracle[i].per_step_scores.size());
    Real total = 0;
    for (Real s : hyps[i].per_step_scores) total += s;
    CHECK(hyps[i].score == doctest::Approx(total).epsilon(1e-9));
  }

  // Same oracle with an active minimum-length constraint.
  bc.min_ratio = Real(0.5);  // min 2 characters
  hyps = model.beam_search_states(enc, bc);
  oracle = enumerate_hypotheses(model, enc, 2, 3);
  REQUIRE(oracle.size() == 12);
  REQUIRE(hyps.size() == 12);
  for (size_t i = 0; i < oracle.size(); ++i) {
    CHECK(hyps[i].tokens == oracle[i].tokens);
    CHECK(hyps[i].score == doctest::Approx(oracle[i].score).epsilon(1e-9));
  }
  for (const Hypothesis& h : hyps) {
    const int chars = static_cast<int>(h.tokens.size()) - 1;
    CHECK(chars >= 2);
    CHECK(chars <= 3);
    CHECK(h.tokens.back() == Vocab::kEos);
  }

  CHECK_THROWS_AS([&] {
    BeamConfig bad;
    bad.beam = 0;
    return model.beam_search_states(enc, bad);
  }(), ConfigError);
  CHECK_THROWS_AS([&] {
    BeamConfig bad;
    bad.min_ratio = Real(0.9);
    bad.max_ratio = Real(0.5);
    return model.beam_search_states(enc, bad);
  }(), ConfigError);
}

TEST_CASE("best beam score is monotone in the width on tiny instances") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 100);
    Vocab vocab = Vocab::from_chars("a");
    AsrModel model(tiny_config(), vocab, rng);
    Tensor x = random_features(8, 4, rng);
    EncoderStates enc = model.encode(x);  // T' = 2, so at most 2 characters
    Real prev = -1e30;
    for (int beam = 1; beam <= 4; ++beam) {
      BeamConfig bc;
      bc.beam = beam;
      bc.min_ratio = Real(0.4);
      bc.max_ratio = Real(1);
      auto hyps = model.beam_search_states(enc, bc);
      REQUIRE(!hyps.empty());
      CHECK(hyps[0].score >= prev - Real(1e-12));
      prev = hyps[0].score;
    }
  }
}

TEST_CASE("shallow fusion shifts scores by the weighted scorer") {
  Rng rng(10);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(16, 4, rng);
  EncoderStates enc = model.encode(x);

  const std::vector<Real> lm_scores = {Real(-0.3), Real(-1.8), Real(-0.4)};
  ConstantScorer scorer(lm_scores);

  BeamConfig plain;
  plain.beam = 4;
  plain.min_ratio = Real(0.25);
  plain.max_ratio = Real(0.75);
  auto no_fusion = model.beam_search_states(enc, plain);

  BeamConfig zero_weight = plain;
  zero_weight.fusion = &scorer;
  zero_weight.fusion_weight = 0;
  auto fused_zero = model.beam_search_states(enc, zero_weight);
  REQUIRE(fused_zero.size() == no_fusion.size());
  for (size_t i = 0; i < no_fusion.size(); ++i) {
    CHECK(fused_zero[i].tokens == no_fusion[i].tokens);
    CHECK(fused_zero[i].score == no_fusion[i].score);
  }

  BeamConfig fused = plain;
  fused.beam = 27;
  fused.fusion = &scorer;
  fused.fusion_weight = Real(0.7);
  auto hyps = model.beam_search_states(enc, fused);
  auto oracle = enumerate_hypotheses(model, enc, 1, 3, &lm_scores, Real(0.7));
  REQUIRE(!hyps.empty());
  CHECK(hyps[0].tokens == oracle[0].tokens);
  CHECK(hyps[0].score == doctest::Approx(oracle[0].score).epsilon(1e-9));
  const Real rescored =
      chain_total(model, enc, hyps[0].tokens, &lm_scores, Real(0.7));
  CHECK(hyps[0].score == doctest::Approx(rescored).epsilon(1e-9));

  ConstantScorer bad_scorer(std::vector<Real>{Real(0), Real(0)});
  BeamConfig bad = plain;
  bad.fusion = &bad_scorer;
  bad.fusion_weight = Real(0.5);
  CHECK_THROWS_AS(model.beam_search_states(enc, bad), ShapeError);
}

TEST_CASE("sampling follows the per-step distribution at zero weights") {
  Rng rng(11);
  Vocab vocab = Vocab::from_chars("a");  // classes: eos, a
  AsrModel model(tiny_config(), vocab, rng);
  fill_zero(model.params());
  EncoderStates enc = model.encode(random_features(8, 4, rng));  // T' = 2

  Rng sample_rng(12345);
  auto samples = model.sample_from_states(enc, 10000, Real(1), Real(1), sample_rng);
  REQUIRE(samples.size() == 10000);
  std::map<size_t, int> outcome_counts;
  int first_char = 0;
  for (const auto& s : samples) {
    REQUIRE(!s.tokens.empty());
    CHECK(s.tokens.back() == Vocab::kEos);
    CHECK(s.tokens.size() <= 3);  // at most two characters plus eos
    if (s.tokens.front() != Vocab::kEos) ++first_char;
    ++outcome_counts[s.tokens.size()];
    if (s.tokens.size() == 3) {
      CHECK(s.truncated);
      // Truncation appends eos without charging its log probability.
      CHECK(s.log_prob.at(0) == doctest::Approx(2 * std::log(0.5)).epsilon(1e-9));
    } else {
      CHECK(!s.truncated);
      CHECK(s.log_prob.at(0) ==
            doctest::Approx(static_cast<Real>(s.tokens.size()) * std::log(0.5))
                .epsilon(1e-9));
    }
  }
  const Real first_freq = static_cast<Real>(first_char) / 10000;
  CHECK(first_freq > Real(0.48));
  CHECK(first_freq < Real(0.52));
  // Outcomes [eos], [a,eos], [a,a,eos] have probabilities 1/2, 1/4, 1/4.
  CHECK(static_cast<Real>(outcome_counts[1]) / 10000 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(static_cast<Real>(outcome_counts[2]) / 10000 == doctest::Approx(0.25).epsilon(0.1));
  CHECK(static_cast<Real>(outcome_counts[3]) / 10000 == doctest::Approx(0.25).epsilon(0.1));

  CHECK_THROWS_AS(model.sample_from_states(enc, 0, Real(1), Real(1), sample_rng),
                  ConfigError);
  CHECK_THROWS_AS(model.sample_from_states(enc, 1, Real(0), Real(1), sample_rng),
                  ConfigError);
  CHECK_THROWS_AS(model.sample_from_states(enc, 1, Real(1), Real(1.5), sample_rng),
                  ConfigError);
}

TEST_CASE("a saturated model emits identical samples") {
  Rng rng(13);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  fill_zero(model.params());
  Tensor bias = model.params().find("asr.out.b");
  bias.data()[static_cast<size_t>(Vocab::to_out_index(vocab.id_of('b')))] = 25;
  EncoderStates enc = model.encode(random_features(8, 4, rng));  // max 2 characters

  Rng sample_rng(7);
  auto samples = model.sample_from_states(enc, 5, Real(1), Real(1), sample_rng);
  REQUIRE(samples.size() == 5);
  const std::vector<int> expected = {vocab.id_of('b'), vocab.id_of('b'), Vocab::kEos};
  for (const auto& s : samples) {
    CHECK(s.tokens == expected);
    CHECK(s.truncated);
  }
}

TEST_CASE("sampled log probabilities match a teacher-forced recomputation") {
  Rng rng(14);
  Vocab vocab = Vocab::from_chars("ab");
  AsrModel model(tiny_config(), vocab, rng);
  Tensor x = random_features(16, 4, rng);
  EncoderStates enc = model.encode(x);

  Rng sample_rng(99);
  auto samples = model.sample_from_states(enc, 20, Real(1), Real(0.75), sample_rng);
  for (const auto& s : samples) {
    std::vector<int> charged = s.tokens;
    if (s.truncated) charged.pop_back();  // final eos carries no factor
    CHECK(s.log_prob.at(0) == doctest::Approx(chain_total(model, enc, charged))
                                  .epsilon(1e-9));
  }

  // Same check under a non-unit temperature, against tempered log-probs.
  Rng temp_rng(100);
  auto tempered = model.sample_from_states(enc, 20, Real(2), Real(0.75), temp_rng);
  for (const auto& s : tempered) {
    std::vector<int> charged = s.tokens;
    if (s.truncated) charged.pop_back();
    NoGradScope guard;
    AsrModel::DecState state = model.initial_state(enc.length());
    int c_prev = Vocab::kSos;
    Real total = 0;
    for (int tok : charged) {
      AsrModel::StepResult r = model.decode_step(c_prev, state, enc);
      std::vector<Real> scaled;
      Real lse = 0;
      for (Real v : r.log_probs.data()) scaled.push_back(v / 2);
      Real mx = *std::max_element(scaled.begin(), scaled.end());
      for (Real v : scaled) lse += std::exp(v - mx);
      lse = mx + std::log(lse);
      total += scaled[static_cast<size_t>(Vocab::to_out_index(tok))] - lse;
      state = r.state;
      c_prev = tok;
    }
    CHECK(s.log_prob.at(0) == doctest::Approx(total).epsilon(1e-9));
  }

  // Identical seeds give identical sample sets.
  Rng a(4242), b(4242);
  auto sa = model.sample_from_states(enc, 5, Real(1), Real(0.75), a);
  auto sb = model.sample_from_states(enc, 5, Real(1), Real(0.75), b);
  for (size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].tokens == sb[i].tokens);
    CHECK(sa[i].log_prob.at(0) == sb[i].log_prob.at(0));
  }
}
