#include "cycleasr/data.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cycleasr {

namespace {
// Base alphabet for synthetic text; the space joins lexicon words so word
// error rates have real word boundaries to work with.
constexpr const char* kAlphabet = "abcdefgh";
}  // namespace

SynthWorld SynthWorld::create(const SynthSpec& spec, uint64_t world_seed) {
  if (spec.feat_dim < 1 || spec.dur_min < 1 || spec.dur_max < spec.dur_min) {
    throw ConfigError("SynthSpec: invalid feature dim or duration range");
  }
  if (spec.noise_std < 0 || spec.speaker_offset_std < 0 ||
      spec.speaker_scale_max < spec.speaker_scale_min) {
    throw ConfigError("SynthSpec: invalid noise or speaker nuisance settings");
  }
  if (spec.lexicon_size < 1 || spec.word_len_min < 1 ||
      spec.word_len_max < spec.word_len_min) {
    throw ConfigError("SynthSpec: invalid lexicon settings");
  }
  SynthWorld w;
  w.spec_ = spec;
  w.vocab_ = Vocab::from_chars(std::string(kAlphabet) + " ");

  Rng base(world_seed);
  Rng proto_rng = base.fork(0);
  const int n_chars = w.vocab_.char_count();
  Tensor protos = Tensor::zeros({n_chars, spec.feat_dim});
  for (auto& v : protos.data()) v = static_cast<Real>(proto_rng.uniform(-1, 1));
  w.prototypes_ = protos;

  Rng lex_rng = base.fork(1);
  std::set<std::string> seen;
  const std::string alphabet = kAlphabet;
  while (static_cast<int>(w.lexicon_.size()) < spec.lexicon_size) {
    const int len = lex_rng.uniform_int(spec.word_len_min, spec.word_len_max);
    std::string word;
    for (int i = 0; i < len; ++i) {
      word.push_back(alphabet[static_cast<size_t>(
          lex_rng.uniform_int(0, static_cast<int>(alphabet.size()) - 1))]);
    }
    if (seen.insert(word).second) w.lexicon_.push_back(word);
  }
  return w;
}

std::string SynthWorld::sample_text(Rng& rng, int min_words, int max_words) const {
  if (min_words < 1 || max_words < min_words) {
    throw ConfigError("sample_text: invalid word count range");
  }
  const int n = rng.uniform_int(min_words, max_words);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    out += lexicon_[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(lexicon_.size()) - 1))];
  }
  return out;
}

Tensor SynthWorld::render(const std::string& text, Rng& rng) const {
  if (text.empty()) throw InputError("render: empty text");
  const int D = spec_.feat_dim;
  std::vector<Real> offset(static_cast<size_t>(D));
  for (auto& v : offset) v = static_cast<Real>(rng.normal()) * spec_.speaker_offset_std;
  const Real scale =
      static_cast<Real>(rng.uniform(spec_.speaker_scale_min, spec_.speaker_scale_max));

  std::vector<Real> frames;
  int T = 0;
  for (char c : text) {
    const int row = vocab_.id_of(c) - Vocab::kFirstChar;
    const Real* proto = prototypes_.data().data() + static_cast<size_t>(row) * D;
    const int dur = rng.uniform_int(spec_.dur_min, spec_.dur_max);
    for (int d = 0; d < dur; ++d) {
      for (int k = 0; k < D; ++k) {
        Real v = scale * proto[k] + offset[static_cast<size_t>(k)];
        if (spec_.noise_std > 0) v += static_cast<Real>(rng.normal()) * spec_.noise_std;
        frames.push_back(v);
      }
      ++T;
    }
  }
  return Tensor::from_data({T, D}, std::move(frames));
}

std::vector<Utterance> synth_generate(const SynthWorld& world, int n_utts,
                                      std::pair<int, int> words_range, uint64_t seed,
                                      const std::string& id_prefix) {
  if (n_utts < 0) throw ConfigError("synth_generate: negative utterance count");
  std::vector<Utterance> out;
  out.reserve(static_cast<size_t>(n_utts));
  Rng base(seed);
  for (int i = 0; i < n_utts; ++i) {
    Rng item = base.fork(static_cast<uint64_t>(i));
    Rng text_rng = item.fork(0);
    Rng feat_rng = item.fork(1);
    Utterance u;
    std::ostringstream id;
    id << id_prefix << "-" << std::setw(4) << std::setfill('0') << i;
    u.id = id.str();
    u.text = world.sample_text(text_rng, words_range.first, words_range.second);
    u.features = world.render(*u.text, feat_rng);
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Utterance> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset: " + path);
  std::vector<Utterance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": invalid JSON record: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      throw FormatError(where + ": record needs a string 'id'");
    }
    Utterance u;
    u.id = j["id"].get<std::string>();
    if (j.contains("text")) {
      if (!j["text"].is_string()) throw FormatError(where + ": 'text' must be a string");
      u.text = j["text"].get<std::string>();
    }
    if (j.contains("feat")) {
      const auto& feat = j["feat"];
      if (!feat.is_array() || feat.empty()) {
        throw FormatError(where + ": 'feat' must be a nonempty array of rows");
      }
      const size_t width = feat[0].is_array() ? feat[0].size() : 0;
      if (width == 0) throw FormatError(where + ": feature rows must be nonempty arrays");
      std::vector<Real> data;
      data.reserve(feat.size() * width);
      for (const auto& row : feat) {
        if (!row.is_array() || row.size() != width) {
          throw FormatError(where + ": inconsistent feature row width");
        }
        for (const auto& v : row) {
          if (!v.is_number()) throw FormatError(where + ": feature entries must be numbers");
          data.push_back(v.get<Real>());
        }
      }
      u.features = Tensor::from_data(
          {static_cast<int>(feat.size()), static_cast<int>(width)}, std::move(data));
    }
    if (!u.has_text() && !u.has_features()) {
      throw FormatError(where + ": record has neither 'text' nor 'feat'");
    }
    out.push_back(std::move(u));
  }
  return out;
}

void save_dataset(const std::vector<Utterance>& utts, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write dataset: " + path);
  for (const Utterance& u : utts) {
    if (!u.has_text() && !u.has_features()) {
      throw InputError("save_dataset: utterance '" + u.id + "' has neither text nor features");
    }
    nlohmann::json j;
    j["id"] = u.id;
    if (u.has_text()) j["text"] = *u.text;
    if (u.has_features()) {
      nlohmann::json rows = nlohmann::json::array();
      const int T = u.features.dim(0), D = u.features.dim(1);
      for (int t = 0; t < T; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (int d = 0; d < D; ++d) row.push_back(u.features.at(t, d));
        rows.push_back(std::move(row));
      }
      j["feat"] = std::move(rows);
    }
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("failed while writing dataset: " + path);
}

std::vector<Batch> batchify(const std::vector<Utterance>& utts, int batch_size,
                            const Vocab& vocab) {
  if (batch_size < 1) throw ConfigError("batchify: batch size must be at least 1");
  std::vector<const Utterance*> order;
  order.reserve(utts.size());
  for (const auto& u : utts) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(), [](const Utterance* a, const Utterance* b) {
    const int la = a->has_features() ? a->features.dim(0)
                                     : static_cast<int>(a->text->size());
    const int lb = b->has_features() ? b->features.dim(0)
                                     : static_cast<int>(b->text->size());
    if (la != lb) return la < lb;
    return a->id < b->id;
  });

  std::vector<Batch> batches;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    Batch batch;
    int t_max = 0, tok_max = 0, feat_dim = 0;
    for (size_t k = begin; k < end; ++k) {
      const Utterance* u = order[k];
      if (u->has_features()) {
        t_max = std::max(t_max, u->features.dim(0));
        if (feat_dim == 0) {
          feat_dim = u->features.dim(1);
        } else if (feat_dim != u->features.dim(1)) {
          throw ShapeError("batchify: mixed feature widths in one corpus");
        }
      }
      if (u->has_text()) tok_max = std::max(tok_max, static_cast<int>(u->text->size()));
    }
    for (size_t k = begin; k < end; ++k) {
      const Utterance* u = order[k];
      BatchItem item;
      item.id = u->id;
      if (u->has_features()) {
        const int T = u->features.dim(0);
        item.feat_len = T;
        item.features = Tensor::zeros({t_max, feat_dim});
        std::copy(u->features.data().begin(), u->features.data().end(),
                  item.features.data().begin());
        item.feat_mask.assign(static_cast<size_t>(t_max), false);
        std::fill(item.feat_mask.begin(), item.feat_mask.begin() + T, true);
      }
      if (u->has_text()) {
        std::vector<int> ids = vocab.encode(*u->text);
        item.tok_len = static_cast<int>(ids.size());
        ids.resize(static_cast<size_t>(tok_max), Vocab::kPad);
        item.tokens = std::move(ids);
        item.tok_mask.assign(static_cast<size_t>(tok_max), false);
        std::fill(item.tok_mask.begin(), item.tok_mask.begin() + item.tok_len, true);
      }
      batch.items.push_back(std::move(item));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace cycleasr
