#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cycleasr/cycle.hpp"
#include "cycleasr/data.hpp"
#include "cycleasr/eval.hpp"
#include "cycleasr/lm.hpp"

namespace cycleasr {

// Every experiment knob with its default, the unit the command line and the
// key=value config files map onto.
struct RunConfig {
  // Corpus generation.
  std::uint64_t data_seed = 1234;
  int n_paired = 50;
  int n_unpaired = 200;
  int n_text = 300;
  int n_val = 30;
  int n_test = 30;
  int min_words = 1;  // words per utterance
  int max_words = 2;
  SynthSpec synth;

  // Recognizer sizes (encoder halves per direction; two subsampling layers
  // shorten T by 4x).
  int asr_hidden = 24;
  int asr_layers = 2;
  int asr_embed = 16;
  int asr_dec_hidden = 32;
  int att_dim = 16;
  int att_filters = 10;
  int att_kernel = 5;

  // Reconstruction model sizes; its target width always tracks the encoder.
  int tte_embed = 16;
  int tte_conv_layers = 2;
  int tte_conv_filters = 16;
  int tte_conv_kernel = 5;
  int tte_enc_hidden = 12;
  int tte_att_dim = 16;
  int tte_att_filters = 8;
  int tte_att_kernel = 5;
  int tte_prenet = 16;
  int tte_dec_hidden = 24;
  int tte_dec_layers = 2;
  int tte_postnet_layers = 2;
  int tte_postnet_filters = 16;
  int tte_postnet_kernel = 5;
  Real dropout = Real(0.5);
  Real zoneout = Real(0.1);
  Real stop_threshold = Real(0.75);

  // Language model sizes.
  int lm_embed = 16;
  int lm_hidden = 32;
  int lm_layers = 1;

  // Training schedules.
  std::uint64_t train_seed = 1;
  int sup_epochs = 60;
  Real sup_lr = Real(3e-3);
  int tte_epochs = 30;
  Real tte_lr = Real(2e-3);
  int lm_epochs = 10;
  Real lm_lr = Real(5e-3);
  int cycle_epochs = 8;
  Real lr_paired = Real(1e-3);
  Real lr_unpaired = Real(2e-3);
  int paired_per_block = 1;
  int unpaired_per_block = 1;
  int n_samples = 5;
  Real temperature = Real(1);
  Real ce_weight = Real(0.1);
  int ce_k = 5;

  // Decoding.
  int beam = 20;      // test-set decoding
  int val_beam = 2;   // per-epoch validation decoding and pseudo labels
  Real min_ratio = Real(0.2);
  Real max_ratio = Real(0.8);
  Real lm_weight = Real(0.3);
};

AsrConfig asr_config(const RunConfig& cfg);
TteConfig tte_config(const RunConfig& cfg);
LmConfig lm_config(const RunConfig& cfg);
BeamConfig beam_config(const RunConfig& cfg);      // test decoding
ScheduleConfig schedule_config(const RunConfig& cfg);

// Five disjoint utterance streams drawn against one shared synthetic world.
// `unpaired` has its transcripts stripped; `oracle` is the same audio with
// them kept, for the everything-supervised reference row.
struct CorpusSplits {
  Vocab vocab;
  std::vector<Utterance> paired;
  std::vector<Utterance> unpaired;
  std::vector<Utterance> oracle;
  std::vector<Utterance> text_only;  // features undefined
  std::vector<Utterance> validation;
  std::vector<Utterance> test;

  std::vector<std::string> texts() const;  // of the text_only split
};

CorpusSplits make_corpus(const RunConfig& cfg);

// Beam-decodes every utterance and scores corpus-level error rates.
struct EvalResult {
  Real wer = 0;
  Real cer = 0;
  std::map<std::string, std::string> hyps;
};
EvalResult evaluate_corpus(const AsrModel& asr, const std::vector<Utterance>& utts,
                           const BeamConfig& bc);

// Teacher-forced targets for reconstruction training: each paired utterance's
// transcript against the recognizer's (detached) encoder states.
std::vector<TtePair> make_tte_pairs(const AsrModel& asr,
                                    const std::vector<Utterance>& paired);

// Supervised pre-training is alternating training with no unpaired set.
TrainResult pretrain_supervised(AsrModel& asr, const TteModel& tte,
                                const std::vector<Utterance>& paired,
                                const std::vector<Utterance>& validation,
                                const RunConfig& cfg, int epochs, Real lr, Rng& rng);

struct BenchmarkOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool run_ce5 = false;  // the k-sample pseudo-label row is optional
  bool run_lm = true;
  std::ostream* progress = nullptr;
};

struct BenchmarkCell {
  Real wer = 0;
  Real cer = 0;
};

// Mode rows: "baseline" (pre-trained only), "cycle", "ce1", optionally
// "ce5", "cycle+lm", and "oracle". Gates compare seed medians.
struct BenchmarkResult {
  std::vector<std::string> modes;
  std::map<std::string, std::vector<BenchmarkCell>> per_seed;
  std::map<std::string, BenchmarkCell> median;

  bool gate_relative_improvement = false;  // cycle >= 5% relative WER gain
  bool gate_cycle_beats_ce1 = false;       // cycle <= one-best pseudo labels
  bool gate_oracle_lowest = false;         // fully supervised row wins
  bool gate_lm_no_harm = false;            // fusion costs at most 2% relative
  bool gate_lm_majority = false;           // fusion helps on most seeds

  bool pass(bool with_lm) const;
};

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opt);

// Human-readable mode/WER/CER table.
void print_benchmark(const BenchmarkResult& result, std::ostream& out);

}  // namespace cycleasr
