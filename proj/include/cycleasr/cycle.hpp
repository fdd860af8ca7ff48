#pragma once

#include <vector>

#include "cycleasr/asr.hpp"
#include "cycleasr/data.hpp"
#include "cycleasr/eval.hpp"
#include "cycleasr/rng.hpp"
#include "cycleasr/tte.hpp"

namespace cycleasr {

enum class BaselineKind { leave_one_out, batch_mean };

// Per-sample baselines for the given losses: the mean of the other N-1
// losses (leave_one_out, 0 when N=1) or the plain in-batch mean.
std::vector<Real> baseline_values(const std::vector<Real>& losses,
                                  BaselineKind kind = BaselineKind::leave_one_out);

struct CycleSample {
  std::vector<int> tokens;  // characters plus eos
  bool truncated = false;
  Real tte_loss = 0;
  Real baseline = 0;
  Real weight = 0;  // tte_loss - baseline, a constant in the estimator
};

struct CycleStepResult {
  std::vector<CycleSample> samples;
  Real estimator = 0;      // value of (1/N) sum_n weight_n * log p(C^n|X)
  Real mean_tte_loss = 0;  // the consistency loss this step observed
  GradMap grads;           // d estimator / d ASR parameters
};

struct CycleConfig {
  int n_samples = 5;
  Real temperature = Real(1);
  Real max_ratio = Real(0.8);
  BaselineKind baseline = BaselineKind::leave_one_out;
};

// One REINFORCE step on one unpaired utterance: sample hypotheses from the
// recognizer, score each with the frozen reconstruction loss against the
// utterance's own (constant) encoder states, and return the gradient of the
// weighted log-likelihood surrogate. The reconstruction model receives no
// gradients and keeps its parameters bitwise intact.
CycleStepResult cycle_step(const Tensor& features, const AsrModel& asr,
                           const TteModel& tte, const CycleConfig& cfg, Rng& rng);

enum class CycleMode { cycle, ce_1best, ce_ksample };

// weight * mean teacher-forced CE against self-decoded (ce_1best) or
// self-sampled (ce_ksample) pseudo labels. Labels that come out empty are
// skipped with a warning; returns an undefined Tensor when all of them do.
Tensor pseudo_label_ce_step(const Tensor& features, const AsrModel& asr, CycleMode mode,
                            int k, Real weight, const BeamConfig& bc, Rng& rng);

struct ScheduleConfig {
  int epochs = 8;
  int paired_per_block = 1;    // supervised steps per interleave block
  int unpaired_per_block = 1;  // unpaired-objective steps per block
  Real lr_paired = Real(1e-3);
  Real lr_unpaired = Real(1e-3);
  CycleConfig cycle;
  Real ce_weight = Real(0.1);
  int ce_k = 5;
  BeamConfig decode;  // validation decoding and one-best pseudo labels
};

struct TrainResult {
  MetricsLog log;
  int best_epoch = 0;  // 1-based epoch whose parameters were kept
  Real best_val_acc = 0;
};

// Interleaves supervised steps over the paired set with mode-specific steps
// over the unpaired set (an empty unpaired set degenerates to plain
// supervised training). Logs the unpaired objective, validation
// teacher-forced accuracy, CER and WER per epoch, and restores the
// parameters of the best-accuracy epoch before returning.
TrainResult train_alternating(AsrModel& asr, const TteModel& tte,
                              const std::vector<Utterance>& paired,
                              const std::vector<Utterance>& unpaired,
                              const std::vector<Utterance>& validation,
                              CycleMode mode, const ScheduleConfig& sched, Rng& rng);

}  // namespace cycleasr
