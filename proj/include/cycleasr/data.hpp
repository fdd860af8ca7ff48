#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cycleasr/rng.hpp"
#include "cycleasr/tensor.hpp"
#include "cycleasr/vocab.hpp"

namespace cycleasr {

// One corpus item: paired (features + text), audio-only, or text-only.
struct Utterance {
  std::string id;
  Tensor features;  // [T, D]; undefined for text-only items
  std::optional<std::string> text;

  bool has_features() const { return features.defined(); }
  bool has_text() const { return text.has_value(); }
};

struct SynthSpec {
  int feat_dim = 16;
  int dur_min = 6;   // frames per character; >= 6 keeps true transcript
  int dur_max = 10;  // lengths inside the decoder's length constraints
  Real noise_std = Real(0.05);
  Real speaker_offset_std = Real(0.5);
  Real speaker_scale_min = Real(0.9);
  Real speaker_scale_max = Real(1.1);
  int lexicon_size = 16;
  int word_len_min = 2;
  int word_len_max = 3;
};

// Fixed random "world": character prototypes and a word lexicon, both drawn
// once from the world seed. Every utterance is rendered against the same
// prototypes, so the mapping from text to features is stable and learnable.
class SynthWorld {
 public:
  static SynthWorld create(const SynthSpec& spec, uint64_t world_seed);

  const SynthSpec& spec() const { return spec_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<std::string>& lexicon() const { return lexicon_; }
  const Tensor& prototypes() const { return prototypes_; }  // [|U|, D]

  std::string sample_text(Rng& rng, int min_words, int max_words) const;
  // Features for a given text: per-character prototype runs with random
  // durations, a per-utterance speaker affine nuisance, and frame noise.
  Tensor render(const std::string& text, Rng& rng) const;

 private:
  SynthSpec spec_;
  Vocab vocab_ = Vocab::from_chars("x");
  std::vector<std::string> lexicon_;
  Tensor prototypes_;
};

std::vector<Utterance> synth_generate(const SynthWorld& world, int n_utts,
                                      std::pair<int, int> words_range, uint64_t seed,
                                      const std::string& id_prefix);

// Line-delimited JSON records: {"id": ..., "text": ..., "feat": [[...],...]},
// text and feat each optional but not both absent.
std::vector<Utterance> load_dataset(const std::string& path);
void save_dataset(const std::vector<Utterance>& utts, const std::string& path);

// Padded view of one utterance inside a batch. Feature rows beyond
// feat_len are zero; token entries beyond tok_len are pad. Losses must
// consult the lengths/masks so padding never contributes.
struct BatchItem {
  std::string id;
  Tensor features;          // [T_max, D], zero-padded (undefined if text-only)
  std::vector<int> tokens;  // character ids padded with kPad (no sentinels)
  std::vector<bool> feat_mask;
  std::vector<bool> tok_mask;
  int feat_len = 0;
  int tok_len = 0;
};

struct Batch {
  std::vector<BatchItem> items;
};

// Length-sorted bucketing into batches of at most batch_size items.
std::vector<Batch> batchify(const std::vector<Utterance>& utts, int batch_size,
                            const Vocab& vocab);

}  // namespace cycleasr
