#include "cycleasr/tte.hpp"

#include <cmath>
#include <utility>

#include "cycleasr/optimizer.hpp"

namespace cycleasr {

TteModel::TteModel(const TteConfig& cfg, const Vocab& vocab, Rng& rng)
    : cfg_(cfg), vocab_(vocab) {
  if (cfg.conv_layers < 1 || cfg.postnet_layers < 1 || cfg.dec_layers < 1) {
    throw ConfigError("TteModel: conv, postnet and decoder stacks need at least one layer");
  }
  embed_ = reg_.add_uniform("tte.embed", {vocab_.size(), cfg.embed_dim}, rng);
  int ch = cfg.embed_dim;
  for (int k = 0; k < cfg.conv_layers; ++k) {
    ConvLayer layer;
    layer.w = reg_.add_uniform("tte.enc_conv" + std::to_string(k),
                               {cfg.conv_kernel * ch, cfg.conv_filters}, rng);
    enc_convs_.push_back(std::move(layer));
    ch = cfg.conv_filters;
  }
  enc_blstm_ = BlstmStack::create(reg_, "tte.enc_blstm", ch, {{cfg.enc_hidden, false}}, rng);
  att_ = AttentionParams::create(reg_, "tte.att", cfg.dec_hidden, enc_blstm_.out_dim(),
                                 cfg.att_dim, cfg.att_filters, cfg.att_kernel, rng);
  prenet1_ = Linear::create(reg_, "tte.prenet1", cfg.target_dim, cfg.prenet_hidden, rng);
  prenet2_ = Linear::create(reg_, "tte.prenet2", cfg.prenet_hidden, cfg.prenet_hidden, rng);
  int in = cfg.prenet_hidden + enc_blstm_.out_dim();
  for (int k = 0; k < cfg.dec_layers; ++k) {
    dec_.push_back(LstmParams::create(reg_, "tte.dec" + std::to_string(k), in,
                                      cfg.dec_hidden, rng));
    in = cfg.dec_hidden;
  }
  frame_proj_ = Linear::create(reg_, "tte.frame", cfg.dec_hidden, cfg.target_dim, rng);
  ch = cfg.dec_hidden;
  for (int k = 0; k < cfg.postnet_layers; ++k) {
    const bool last = k + 1 == cfg.postnet_layers;
    const int out = last ? cfg.target_dim : cfg.postnet_filters;
    ConvLayer layer;
    layer.w = reg_.add_uniform("tte.postnet" + std::to_string(k),
                               {cfg.postnet_kernel * ch, out}, rng);
    postnet_.push_back(std::move(layer));
    ch = out;
  }
  stop_proj_ = Linear::create(reg_, "tte.stop", cfg.dec_hidden, 1, rng);
}

Tensor TteModel::encode_text(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw InputError("TteModel::encode_text: empty input");
  for (int id : tokens) {
    if (id < 0 || id >= vocab_.size()) {
      throw InputError("TteModel::encode_text: token id " + std::to_string(id) +
                       " out of range");
    }
  }
  Tensor x = ops::take_rows(embed_, tokens);
  for (const ConvLayer& layer : enc_convs_) {
    x = ops::relu(seqnorm(ops::conv1d(x, layer.w, cfg_.conv_kernel)));
  }
  return enc_blstm_.apply(x);
}

TteModel::DecCore TteModel::initial_core(int n_keys) const {
  DecCore core;
  core.lstm.assign(static_cast<size_t>(cfg_.dec_layers), LstmState::zeros(cfg_.dec_hidden));
  core.att = AttentionState::initial(n_keys);
  return core;
}

Tensor TteModel::prenet_apply(const Tensor& frame, RunMode mode, Rng* rng) const {
  const bool frozen = mode == RunMode::frozen;
  Rng dummy(0);
  Rng& r = rng != nullptr ? *rng : dummy;
  Tensor v = ops::relu(prenet1_.apply(frame));
  v = stochastic_regularizer(v, RegKind::dropout, cfg_.dropout, r, frozen);
  v = ops::relu(prenet2_.apply(v));
  return stochastic_regularizer(v, RegKind::dropout, cfg_.dropout, r, frozen);
}

Tensor TteModel::postnet_apply(const Tensor& q_rows) const {
  Tensor x = q_rows;
  for (size_t k = 0; k < postnet_.size(); ++k) {
    x = ops::conv1d(x, postnet_[k].w, cfg_.postnet_kernel);
    if (k + 1 < postnet_.size()) x = ops::tanh(seqnorm(x));
  }
  return x;
}

Tensor TteModel::dec_step(const Tensor& prev_frame, const Tensor& keys, DecCore& core,
                          RunMode mode, Rng* rng) const {
  if ((mode == RunMode::train || mode == RunMode::generate) && rng == nullptr) {
    throw StateError("TteModel: stochastic run modes need a generator");
  }
  const bool zoneout_live = mode == RunMode::train;
  Rng dummy(0);
  Rng& r = rng != nullptr ? *rng : dummy;

  AttentionResult att = location_attention(core.lstm.back().h, keys, core.att,
                                           AttentionMode::accumulated, att_);
  core.att = std::move(att.state);
  Tensor x = ops::concat_cols({prenet_apply(prev_frame, mode, rng), att.context});
  for (size_t k = 0; k < dec_.size(); ++k) {
    LstmState next = lstm_step(x, core.lstm[k], dec_[k]);
    next.h = stochastic_regularizer(next.h, RegKind::zoneout, cfg_.zoneout, r,
                                    !zoneout_live, &core.lstm[k].h);
    next.c = stochastic_regularizer(next.c, RegKind::zoneout, cfg_.zoneout, r,
                                    !zoneout_live, &core.lstm[k].c);
    x = next.h;
    core.lstm[k] = std::move(next);
  }
  return core.lstm.back().h;
}

TtePrediction TteModel::decode_teacher_forced(const std::vector<int>& tokens,
                                              const EncoderStates& target,
                                              Rng* rng) const {
  if (target.length() < 1) {
    throw InputError("TteModel::decode_teacher_forced: empty target");
  }
  if (target.states.dim(1) != cfg_.target_dim) {
    throw ShapeError("TteModel::decode_teacher_forced: target width " +
                     std::to_string(target.states.dim(1)) + " does not match " +
                     std::to_string(cfg_.target_dim));
  }
  const RunMode mode = rng == nullptr ? RunMode::frozen : RunMode::train;
  Tensor keys = encode_text(tokens);
  DecCore core = initial_core(keys.dim(0));
  const int frames = target.length();
  std::vector<Tensor> qs;
  qs.reserve(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    Tensor prev = t == 0 ? Tensor::zeros({cfg_.target_dim})
                         : ops::pick_row(target.states, t - 1);
    qs.push_back(dec_step(prev, keys, core, mode, rng));
  }
  Tensor q_rows = ops::stack_rows(qs);
  Tensor lin = frame_proj_.apply(q_rows);
  TtePrediction pred;
  pred.before = ops::tanh(lin);
  pred.after = ops::tanh(ops::add(lin, postnet_apply(q_rows)));
  pred.stop_probs = ops::sigmoid(ops::reshape(stop_proj_.apply(q_rows), {frames}));
  return pred;
}

TtePrediction TteModel::free_run(const std::vector<int>& tokens, Real stop_threshold,
                                 int max_frames, Rng& rng) const {
  if (!(stop_threshold > 0) || !(stop_threshold < 1)) {
    throw ConfigError("TteModel::free_run: stop threshold must lie in (0,1)");
  }
  if (max_frames < 1) {
    throw ConfigError("TteModel::free_run: max_frames must be positive");
  }
  NoGradScope guard;
  Tensor keys = encode_text(tokens);
  DecCore core = initial_core(keys.dim(0));
  std::vector<Tensor> qs;
  Tensor prev = Tensor::zeros({cfg_.target_dim});
  for (int t = 0; t < max_frames; ++t) {
    qs.push_back(dec_step(prev, keys, core, RunMode::generate, &rng));
    // Refine the frames produced so far and feed the newest one back; the
    // convolution sees zero padding where the future frames would be.
    Tensor q_rows = ops::stack_rows(qs);
    Tensor after = ops::tanh(ops::add(frame_proj_.apply(q_rows), postnet_apply(q_rows)));
    prev = ops::pick_row(after, t);
    const Real stop_logit = stop_proj_.apply(qs.back()).at(0);
    if (Real(1) / (Real(1) + std::exp(-stop_logit)) > stop_threshold) break;
  }
  Tensor q_rows = ops::stack_rows(qs);
  Tensor lin = frame_proj_.apply(q_rows);
  TtePrediction pred;
  pred.before = ops::tanh(lin);
  pred.after = ops::tanh(ops::add(lin, postnet_apply(q_rows)));
  pred.stop_probs = ops::sigmoid(
      ops::reshape(stop_proj_.apply(q_rows), {static_cast<int>(qs.size())}));
  return pred;
}

Tensor tte_loss(const TtePrediction& pred, const EncoderStates& target) {
  if (pred.length() != target.length()) {
    throw InputError("tte_loss: prediction length " + std::to_string(pred.length()) +
                     " does not match target length " + std::to_string(target.length()));
  }
  Tensor l = ops::add(ops::sq_err(pred.after, target.states),
                      ops::sq_err(pred.before, target.states));
  l = ops::add(l, ops::abs_err(pred.after, target.states));
  l = ops::add(l, ops::abs_err(pred.before, target.states));
  return ops::add(l, ops::bce_loss(pred.stop_probs, target.stop_labels));
}

std::vector<Real> tte_train(TteModel& model, const std::vector<TtePair>& pairs,
                            const TteTrainConfig& cfg, Rng& rng) {
  if (pairs.empty()) throw InputError("tte_train: empty training set");
  if (cfg.epochs < 0) throw ConfigError("tte_train: negative epoch count");
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam adam(model.params().tensors(), acfg);

  const auto eval_mean = [&]() {
    NoGradScope guard;
    Real total = 0;
    for (const TtePair& p : pairs) {
      total += tte_loss(model.decode_teacher_forced(p.tokens, p.target, nullptr),
                        p.target)
                   .value();
    }
    return total / static_cast<Real>(pairs.size());
  };

  std::vector<Real> curve;
  curve.reserve(static_cast<size_t>(cfg.epochs) + 1);
  curve.push_back(eval_mean());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i : shuffled_indices(static_cast<int>(pairs.size()), rng)) {
      const TtePair& p = pairs[static_cast<size_t>(i)];
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = tte_loss(model.decode_teacher_forced(p.tokens, p.target, &rng),
                             p.target);
      adam.step(tape.backward_map(loss));
    }
    curve.push_back(eval_mean());
  }
  return curve;
}

}  // namespace cycleasr
