#pragma once

#include <map>
#include <string>
#include <vector>

#include "cycleasr/common.hpp"

namespace cycleasr {

struct EditCounts {
  int distance = 0;
  int subs = 0;
  int ins = 0;
  int dels = 0;
};

// Levenshtein alignment with unit costs. Ties prefer substitution over an
// insert+delete pair, then deletion over insertion, so counts are
// deterministic. Insertions/deletions are counted from reference `a` to
// hypothesis `b` (extra hypothesis tokens are insertions).
EditCounts edit_distance(const std::vector<std::string>& a,
                         const std::vector<std::string>& b);

struct ScoreReport {
  int subs = 0;
  int ins = 0;
  int dels = 0;
  long ref_len = 0;
  Real cer = 0;  // only the matching unit's field is meaningful
  Real wer = 0;

  Real rate() const;
};

enum class ScoreUnit { character, word };

// Corpus-level rate: total edits over total reference length. Reference ids
// missing from hyps count as full deletions (a warning goes to stderr).
ScoreReport score_corpus(const std::map<std::string, std::string>& hyps,
                         const std::map<std::string, std::string>& refs, ScoreUnit unit);

// Per-epoch quantities of a cycle-training run.
struct MetricsLog {
  struct Row {
    int epoch = 0;
    Real cycle_loss = 0;
    Real val_acc = 0;
    Real val_cer = 0;
    Real val_wer = 0;
  };
  std::vector<Row> rows;
};

// CSV with header epoch,cycle_loss,val_acc,val_cer,val_wer. When svg_path is
// nonempty, also writes a small line plot; plot failures only warn.
void export_curves(const MetricsLog& log, const std::string& csv_path,
                   const std::string& svg_path = "");
MetricsLog import_curves(const std::string& csv_path);

// Tokenization helpers shared by scoring and tests.
std::vector<std::string> char_tokens(const std::string& text);
std::vector<std::string> word_tokens(const std::string& text);

}  // namespace cycleasr
