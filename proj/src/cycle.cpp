#include "cycleasr/cycle.hpp"

#include <iostream>
#include <utility>

#include "cycleasr/optimizer.hpp"

namespace cycleasr {

namespace {

std::vector<int> target_tokens(const Utterance& utt, const Vocab& vocab) {
  std::vector<int> tokens = vocab.encode(*utt.text);
  tokens.push_back(Vocab::kEos);
  return tokens;
}

// Character count of a hypothesis/sample token list (trailing eos excluded).
bool label_is_empty(const std::vector<int>& tokens) { return tokens.size() <= 1; }

}  // namespace

std::vector<Real> baseline_values(const std::vector<Real>& losses, BaselineKind kind) {
  if (losses.empty()) throw InputError("baseline_values: empty loss list");
  const size_t n = losses.size();
  Real sum = 0;
  for (Real l : losses) sum += l;
  std::vector<Real> out(n);
  if (kind == BaselineKind::batch_mean || n == 1) {
    const Real mean = n == 1 && kind == BaselineKind::leave_one_out
                          ? Real(0)
                          : sum / static_cast<Real>(n);
    for (size_t i = 0; i < n; ++i) out[i] = mean;
    return out;
  }
  for (size_t i = 0; i < n; ++i) {
    out[i] = (sum - losses[i]) / static_cast<Real>(n - 1);
  }
  return out;
}

CycleStepResult cycle_step(const Tensor& features, const AsrModel& asr,
                           const TteModel& tte, const CycleConfig& cfg, Rng& rng) {
  if (cfg.n_samples < 1) throw ConfigError("cycle_step: need at least one sample");
  Tape tape;
  TapeScope scope(tape);
  EncoderStates enc = asr.encode(features);
  std::vector<SampleResult> samples =
      asr.sample_from_states(enc, cfg.n_samples, cfg.temperature, cfg.max_ratio, rng);

  std::vector<Real> losses(samples.size());
  {
    // The reconstruction loss is only a constant weight: no gradients reach
    // the reconstruction model, and none flow back into the encoder states.
    NoGradScope guard;
    for (size_t n = 0; n < samples.size(); ++n) {
      TtePrediction pred = tte.decode_teacher_forced(samples[n].tokens, enc, nullptr);
      losses[n] = tte_loss(pred, enc).value();
    }
  }
  const std::vector<Real> baselines = baseline_values(losses, cfg.baseline);

  CycleStepResult result;
  result.samples.resize(samples.size());
  Tensor objective;
  Real loss_sum = 0;
  const Real inv_n = Real(1) / static_cast<Real>(samples.size());
  for (size_t n = 0; n < samples.size(); ++n) {
    CycleSample& s = result.samples[n];
    s.tokens = samples[n].tokens;
    s.truncated = samples[n].truncated;
    s.tte_loss = losses[n];
    s.baseline = baselines[n];
    s.weight = losses[n] - baselines[n];
    loss_sum += losses[n];
    Tensor term = ops::mul_scalar(samples[n].log_prob, s.weight * inv_n);
    objective = objective.defined() ? ops::add(objective, term) : term;
  }
  result.estimator = objective.value();
  result.mean_tte_loss = loss_sum * inv_n;
  result.grads = tape.backward_map(objective);
  return result;
}

Tensor pseudo_label_ce_step(const Tensor& features, const AsrModel& asr, CycleMode mode,
                            int k, Real weight, const BeamConfig& bc, Rng& rng) {
  if (mode == CycleMode::cycle) {
    throw ConfigError("pseudo_label_ce_step: mode must be ce_1best or ce_ksample");
  }
  if (weight < 0) throw ConfigError("pseudo_label_ce_step: negative weight");

  std::vector<std::vector<int>> labels;
  if (mode == CycleMode::ce_1best) {
    std::vector<Hypothesis> hyps = asr.beam_search(features, bc);
    if (!hyps.empty()) labels.push_back(hyps.front().tokens);
  } else {
    if (k < 1) throw ConfigError("pseudo_label_ce_step: need at least one sample");
    NoGradScope guard;
    for (SampleResult& s :
         asr.sample_sequences(features, k, Real(1), bc.max_ratio, rng)) {
      labels.push_back(std::move(s.tokens));
    }
  }

  Tensor total;
  int used = 0;
  for (const std::vector<int>& tokens : labels) {
    if (label_is_empty(tokens)) {
      std::cerr << "pseudo_label_ce_step: skipping empty pseudo label\n";
      continue;
    }
    Tensor loss = asr.supervised_loss(features, tokens);
    total = total.defined() ? ops::add(total, loss) : loss;
    ++used;
  }
  if (!total.defined()) return Tensor();
  return ops::mul_scalar(total, weight / static_cast<Real>(used));
}

TrainResult train_alternating(AsrModel& asr, const TteModel& tte,
                              const std::vector<Utterance>& paired,
                              const std::vector<Utterance>& unpaired,
                              const std::vector<Utterance>& validation,
                              CycleMode mode, const ScheduleConfig& sched, Rng& rng) {
  if (sched.epochs < 1) throw ConfigError("train_alternating: epochs must be positive");
  if (sched.paired_per_block < 1 || sched.unpaired_per_block < 1) {
    throw ConfigError("train_alternating: interleave ratio parts must be at least 1");
  }
  if (paired.empty()) throw InputError("train_alternating: empty paired set");
  if (validation.empty()) throw InputError("train_alternating: empty validation set");
  const Vocab& vocab = asr.vocab();
  for (const Utterance& u : paired) {
    if (!u.has_features() || !u.has_text()) {
      throw InputError("train_alternating: paired item " + u.id + " is not paired");
    }
  }
  for (const Utterance& u : unpaired) {
    if (!u.has_features()) {
      throw InputError("train_alternating: unpaired item " + u.id + " has no features");
    }
  }
  for (const Utterance& u : validation) {
    if (!u.has_features() || !u.has_text()) {
      throw InputError("train_alternating: validation item " + u.id + " is not paired");
    }
  }

  Adam adam(asr.params().tensors());
  TrainResult result;
  std::vector<std::vector<Real>> best_snapshot;

  const auto supervised_step = [&](const Utterance& utt) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = asr.supervised_loss(utt.features, target_tokens(utt, vocab));
    adam.config().lr = sched.lr_paired;
    adam.step(tape.backward_map(loss));
  };
  const auto unpaired_step = [&](const Utterance& utt, std::vector<Real>& losses) {
    if (mode == CycleMode::cycle) {
      CycleStepResult r = cycle_step(utt.features, asr, tte, sched.cycle, rng);
      adam.config().lr = sched.lr_unpaired;
      adam.step(r.grads);
      losses.push_back(r.mean_tte_loss);
      return;
    }
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = pseudo_label_ce_step(utt.features, asr, mode, sched.ce_k,
                                       sched.ce_weight, sched.decode, rng);
    if (!loss.defined()) return;
    losses.push_back(loss.value());
    adam.config().lr = sched.lr_unpaired;
    adam.step(tape.backward_map(loss));
  };

  for (int epoch = 1; epoch <= sched.epochs; ++epoch) {
    const std::vector<int> p_order = shuffled_indices(static_cast<int>(paired.size()), rng);
    const std::vector<int> u_order = shuffled_indices(static_cast<int>(unpaired.size()), rng);
    std::vector<Real> unpaired_losses;
    if (unpaired.empty()) {
      for (int p : p_order) supervised_step(paired[static_cast<size_t>(p)]);
    } else {
      size_t p = 0, u = 0;
      while (u < u_order.size()) {
        for (int j = 0; j < sched.paired_per_block; ++j, ++p) {
          supervised_step(paired[static_cast<size_t>(p_order[p % p_order.size()])]);
        }
        for (int j = 0; j < sched.unpaired_per_block && u < u_order.size(); ++j, ++u) {
          unpaired_step(unpaired[static_cast<size_t>(u_order[u])], unpaired_losses);
        }
      }
    }

    // Validation pass: teacher-forced accuracy plus decoded error rates.
    int correct = 0, total = 0;
    std::map<std::string, std::string> refs, hyps;
    {
      NoGradScope guard;
      for (const Utterance& utt : validation) {
        EncoderStates enc = asr.encode(utt.features);
        const auto counts = asr.teacher_forced_counts(enc, target_tokens(utt, vocab));
        correct += counts.first;
        total += counts.second;
        const std::vector<Hypothesis> out = asr.beam_search_states(enc, sched.decode);
        refs[utt.id] = *utt.text;
        hyps[utt.id] = out.empty() ? std::string() : vocab.decode(out.front().tokens);
      }
    }
    MetricsLog::Row row;
    row.epoch = epoch;
    Real loss_sum = 0;
    for (Real l : unpaired_losses) loss_sum += l;
    row.cycle_loss =
        unpaired_losses.empty() ? Real(0) : loss_sum / static_cast<Real>(unpaired_losses.size());
    row.val_acc = total > 0 ? static_cast<Real>(correct) / static_cast<Real>(total) : Real(0);
    row.val_cer = score_corpus(hyps, refs, ScoreUnit::character).cer;
    row.val_wer = score_corpus(hyps, refs, ScoreUnit::word).wer;
    result.log.rows.push_back(row);

    if (result.best_epoch == 0 || row.val_acc > result.best_val_acc) {
      result.best_epoch = epoch;
      result.best_val_acc = row.val_acc;
      best_snapshot.clear();
      for (const Tensor& t : asr.params().tensors()) best_snapshot.push_back(t.data());
    }
  }

  std::vector<Tensor> tensors = asr.params().tensors();
  for (size_t i = 0; i < tensors.size(); ++i) {
    tensors[i].data() = best_snapshot[i];
  }
  return result;
}

}  // namespace cycleasr
