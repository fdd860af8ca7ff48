#include "cycleasr/pipeline.hpp"

#include <algorithm>
#include <iomanip>

namespace cycleasr {

namespace {

void note(std::ostream* progress, const std::string& line) {
  if (progress != nullptr) *progress << line << "\n" << std::flush;
}

AsrModel clone_asr(const AsrModel& src, const RunConfig& cfg, const Vocab& vocab) {
  Rng throwaway(0);
  AsrModel copy(asr_config(cfg), vocab, throwaway);
  copy_values(src.params(), copy.params());
  return copy;
}

Real median_of(std::vector<Real> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2;
}

BenchmarkCell median_cell(const std::vector<BenchmarkCell>& cells) {
  std::vector<Real> wers, cers;
  for (const BenchmarkCell& c : cells) {
    wers.push_back(c.wer);
    cers.push_back(c.cer);
  }
  return {median_of(std::move(wers)), median_of(std::move(cers))};
}

}  // namespace

AsrConfig asr_config(const RunConfig& cfg) {
  AsrConfig out;
  out.feat_dim = cfg.synth.feat_dim;
  out.enc_layers.assign(static_cast<size_t>(cfg.asr_layers), {cfg.asr_hidden, true});
  out.embed_dim = cfg.asr_embed;
  out.dec_hidden = cfg.asr_dec_hidden;
  out.att_dim = cfg.att_dim;
  out.att_filters = cfg.att_filters;
  out.att_kernel = cfg.att_kernel;
  return out;
}

TteConfig tte_config(const RunConfig& cfg) {
  TteConfig out;
  out.target_dim = 2 * cfg.asr_hidden;  // predicts the encoder's state rows
  out.embed_dim = cfg.tte_embed;
  out.conv_layers = cfg.tte_conv_layers;
  out.conv_filters = cfg.tte_conv_filters;
  out.conv_kernel = cfg.tte_conv_kernel;
  out.enc_hidden = cfg.tte_enc_hidden;
  out.att_dim = cfg.tte_att_dim;
  out.att_filters = cfg.tte_att_filters;
  out.att_kernel = cfg.tte_att_kernel;
  out.prenet_hidden = cfg.tte_prenet;
  out.dec_hidden = cfg.tte_dec_hidden;
  out.dec_layers = cfg.tte_dec_layers;
  out.postnet_layers = cfg.tte_postnet_layers;
  out.postnet_filters = cfg.tte_postnet_filters;
  out.postnet_kernel = cfg.tte_postnet_kernel;
  out.dropout = cfg.dropout;
  out.zoneout = cfg.zoneout;
  return out;
}

LmConfig lm_config(const RunConfig& cfg) {
  return {cfg.lm_embed, cfg.lm_hidden, cfg.lm_layers};
}

BeamConfig beam_config(const RunConfig& cfg) {
  BeamConfig bc;
  bc.beam = cfg.beam;
  bc.min_ratio = cfg.min_ratio;
  bc.max_ratio = cfg.max_ratio;
  return bc;
}

ScheduleConfig schedule_config(const RunConfig& cfg) {
  ScheduleConfig sched;
  sched.epochs = cfg.cycle_epochs;
  sched.paired_per_block = cfg.paired_per_block;
  sched.unpaired_per_block = cfg.unpaired_per_block;
  sched.lr_paired = cfg.lr_paired;
  sched.lr_unpaired = cfg.lr_unpaired;
  sched.cycle.n_samples = cfg.n_samples;
  sched.cycle.temperature = cfg.temperature;
  sched.cycle.max_ratio = cfg.max_ratio;
  sched.ce_weight = cfg.ce_weight;
  sched.ce_k = cfg.ce_k;
  sched.decode.beam = cfg.val_beam;
  sched.decode.min_ratio = cfg.min_ratio;
  sched.decode.max_ratio = cfg.max_ratio;
  return sched;
}

std::vector<std::string> CorpusSplits::texts() const {
  std::vector<std::string> out;
  out.reserve(text_only.size());
  for (const Utterance& u : text_only) out.push_back(*u.text);
  return out;
}

CorpusSplits make_corpus(const RunConfig& cfg) {
  if (cfg.n_paired < 0 || cfg.n_unpaired < 0 || cfg.n_text < 0 || cfg.n_val < 0 ||
      cfg.n_test < 0) {
    throw ConfigError("make_corpus: split sizes must be non-negative");
  }
  const SynthWorld world = SynthWorld::create(cfg.synth, cfg.data_seed);
  const std::pair<int, int> words{cfg.min_words, cfg.max_words};

  CorpusSplits out{world.vocab(), {}, {}, {}, {}, {}, {}};
  out.paired = synth_generate(world, cfg.n_paired, words, cfg.data_seed + 1, "sup");
  out.oracle = synth_generate(world, cfg.n_unpaired, words, cfg.data_seed + 2, "unp");
  out.unpaired = out.oracle;
  for (Utterance& u : out.unpaired) u.text.reset();
  out.text_only = synth_generate(world, cfg.n_text, words, cfg.data_seed + 3, "txt");
  for (Utterance& u : out.text_only) u.features = Tensor();
  out.validation = synth_generate(world, cfg.n_val, words, cfg.data_seed + 4, "val");
  out.test = synth_generate(world, cfg.n_test, words, cfg.data_seed + 5, "tst");
  return out;
}

EvalResult evaluate_corpus(const AsrModel& asr, const std::vector<Utterance>& utts,
                           const BeamConfig& bc) {
  if (utts.empty()) throw InputError("evaluate_corpus: empty utterance list");
  NoGradScope guard;
  EvalResult out;
  std::map<std::string, std::string> refs;
  for (const Utterance& u : utts) {
    if (!u.has_features() || !u.has_text()) {
      throw InputError("evaluate_corpus: item " + u.id + " is not paired");
    }
    const std::vector<Hypothesis> hyps = asr.beam_search(u.features, bc);
    out.hyps[u.id] = hyps.empty() ? std::string() : asr.vocab().decode(hyps.front().tokens);
    refs[u.id] = *u.text;
  }
  out.wer = score_corpus(out.hyps, refs, ScoreUnit::word).wer;
  out.cer = score_corpus(out.hyps, refs, ScoreUnit::character).cer;
  return out;
}

std::vector<TtePair> make_tte_pairs(const AsrModel& asr,
                                    const std::vector<Utterance>& paired) {
  NoGradScope guard;
  std::vector<TtePair> pairs;
  pairs.reserve(paired.size());
  for (const Utterance& u : paired) {
    if (!u.has_features() || !u.has_text()) {
      throw InputError("make_tte_pairs: item " + u.id + " is not paired");
    }
    std::vector<int> tokens = asr.vocab().encode(*u.text);
    tokens.push_back(Vocab::kEos);
    pairs.push_back({std::move(tokens), asr.encode(u.features).detach()});
  }
  return pairs;
}

TrainResult pretrain_supervised(AsrModel& asr, const TteModel& tte,
                                const std::vector<Utterance>& paired,
                                const std::vector<Utterance>& validation,
                                const RunConfig& cfg, int epochs, Real lr, Rng& rng) {
  ScheduleConfig sched = schedule_config(cfg);
  sched.epochs = epochs;
  sched.lr_paired = lr;
  return train_alternating(asr, tte, paired, {}, validation, CycleMode::cycle, sched, rng);
}

bool BenchmarkResult::pass(bool with_lm) const {
  bool ok = gate_relative_improvement && gate_cycle_beats_ce1 && gate_oracle_lowest;
  if (with_lm) ok = ok && gate_lm_no_harm && gate_lm_majority;
  return ok;
}

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opt) {
  if (opt.seeds.empty()) throw ConfigError("run_benchmark: need at least one seed");
  const CorpusSplits corpus = make_corpus(cfg);
  if (corpus.paired.empty() || corpus.unpaired.empty() || corpus.validation.empty() ||
      corpus.test.empty()) {
    throw ConfigError("run_benchmark: paired, unpaired, validation and test splits "
                      "must all be non-empty");
  }
  if (opt.run_lm && corpus.text_only.empty()) {
    throw ConfigError("run_benchmark: the fusion row needs text-only sentences");
  }
  const BeamConfig bc = beam_config(cfg);

  BenchmarkResult result;
  result.modes = {"baseline", "cycle", "ce1"};
  if (opt.run_ce5) result.modes.push_back("ce5");
  if (opt.run_lm) result.modes.push_back("cycle+lm");
  result.modes.push_back("oracle");
  for (const std::string& mode : result.modes) result.per_seed[mode] = {};

  for (std::uint64_t seed : opt.seeds) {
    const std::string tag = "seed " + std::to_string(seed);
    Rng rng(seed);
    AsrModel base(asr_config(cfg), corpus.vocab, rng);
    TteModel tte(tte_config(cfg), corpus.vocab, rng);

    note(opt.progress, tag + ": supervised pre-training");
    pretrain_supervised(base, tte, corpus.paired, corpus.validation, cfg, cfg.sup_epochs,
                        cfg.sup_lr, rng);
    EvalResult base_eval = evaluate_corpus(base, corpus.test, bc);
    result.per_seed["baseline"].push_back({base_eval.wer, base_eval.cer});
    note(opt.progress, tag + ": baseline WER " + std::to_string(base_eval.wer));

    note(opt.progress, tag + ": reconstruction training");
    tte_train(tte, make_tte_pairs(base, corpus.paired), {cfg.tte_epochs, cfg.tte_lr}, rng);

    const ScheduleConfig sched = schedule_config(cfg);
    AsrModel cycle_model = clone_asr(base, cfg, corpus.vocab);
    note(opt.progress, tag + ": cycle training");
    train_alternating(cycle_model, tte, corpus.paired, corpus.unpaired, corpus.validation,
                      CycleMode::cycle, sched, rng);
    EvalResult cycle_eval = evaluate_corpus(cycle_model, corpus.test, bc);
    result.per_seed["cycle"].push_back({cycle_eval.wer, cycle_eval.cer});
    note(opt.progress, tag + ": cycle WER " + std::to_string(cycle_eval.wer));

    {
      AsrModel ce1 = clone_asr(base, cfg, corpus.vocab);
      note(opt.progress, tag + ": one-best pseudo-label training");
      train_alternating(ce1, tte, corpus.paired, corpus.unpaired, corpus.validation,
                        CycleMode::ce_1best, sched, rng);
      EvalResult ce1_eval = evaluate_corpus(ce1, corpus.test, bc);
      result.per_seed["ce1"].push_back({ce1_eval.wer, ce1_eval.cer});
      note(opt.progress, tag + ": ce1 WER " + std::to_string(ce1_eval.wer));
    }

    if (opt.run_ce5) {
      AsrModel ce5 = clone_asr(base, cfg, corpus.vocab);
      note(opt.progress, tag + ": sampled pseudo-label training");
      train_alternating(ce5, tte, corpus.paired, corpus.unpaired, corpus.validation,
                        CycleMode::ce_ksample, sched, rng);
      EvalResult ce5_eval = evaluate_corpus(ce5, corpus.test, bc);
      result.per_seed["ce5"].push_back({ce5_eval.wer, ce5_eval.cer});
      note(opt.progress, tag + ": ce5 WER " + std::to_string(ce5_eval.wer));
    }

    if (opt.run_lm) {
      note(opt.progress, tag + ": language-model training");
      LmModel lm(lm_config(cfg), corpus.vocab, rng);
      lm_train(lm, corpus.texts(), {cfg.lm_epochs, cfg.lm_lr}, rng);
      BeamConfig fused = bc;
      fused.fusion = &lm;
      fused.fusion_weight = cfg.lm_weight;
      EvalResult lm_eval = evaluate_corpus(cycle_model, corpus.test, fused);
      result.per_seed["cycle+lm"].push_back({lm_eval.wer, lm_eval.cer});
      note(opt.progress, tag + ": cycle+lm WER " + std::to_string(lm_eval.wer));
    }

    {
      std::vector<Utterance> everything = corpus.paired;
      everything.insert(everything.end(), corpus.oracle.begin(), corpus.oracle.end());
      AsrModel oracle = clone_asr(base, cfg, corpus.vocab);
      note(opt.progress, tag + ": oracle training");
      pretrain_supervised(oracle, tte, everything, corpus.validation, cfg,
                          cfg.cycle_epochs, cfg.lr_paired, rng);
      EvalResult oracle_eval = evaluate_corpus(oracle, corpus.test, bc);
      result.per_seed["oracle"].push_back({oracle_eval.wer, oracle_eval.cer});
      note(opt.progress, tag + ": oracle WER " + std::to_string(oracle_eval.wer));
    }
  }

  for (const std::string& mode : result.modes) {
    result.median[mode] = median_cell(result.per_seed[mode]);
  }

  const Real base_wer = result.median["baseline"].wer;
  const Real cycle_wer = result.median["cycle"].wer;
  result.gate_relative_improvement = cycle_wer <= Real(0.95) * base_wer;
  result.gate_cycle_beats_ce1 = cycle_wer <= result.median["ce1"].wer;
  result.gate_oracle_lowest = true;
  for (const std::string& mode : result.modes) {
    if (mode == "oracle") continue;
    if (result.median["oracle"].wer > result.median[mode].wer) {
      result.gate_oracle_lowest = false;
    }
  }
  if (opt.run_lm) {
    const auto& lm_cells = result.per_seed["cycle+lm"];
    const auto& cycle_cells = result.per_seed["cycle"];
    result.gate_lm_no_harm = result.median["cycle+lm"].wer <= Real(1.02) * cycle_wer;
    int improved = 0;
    for (size_t i = 0; i < lm_cells.size(); ++i) {
      if (lm_cells[i].wer < cycle_cells[i].wer) ++improved;
    }
    result.gate_lm_majority = improved * 2 > static_cast<int>(lm_cells.size());
  }
  return result;
}

void print_benchmark(const BenchmarkResult& result, std::ostream& out) {
  out << std::left << std::setw(10) << "mode";
  const size_t seeds = result.per_seed.begin()->second.size();
  for (size_t s = 0; s < seeds; ++s) {
    out << std::right << std::setw(10) << ("wer[" + std::to_string(s) + "]");
  }
  out << std::right << std::setw(10) << "med wer" << std::setw(10) << "med cer" << "\n";
  out << std::fixed << std::setprecision(3);
  for (const std::string& mode : result.modes) {
    out << std::left << std::setw(10) << mode;
    for (const BenchmarkCell& c : result.per_seed.at(mode)) {
      out << std::right << std::setw(10) << c.wer;
    }
    out << std::right << std::setw(10) << result.median.at(mode).wer << std::setw(10)
        << result.median.at(mode).cer << "\n";
  }
}

}  // namespace cycleasr
