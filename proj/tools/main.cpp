#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cycleasr/checkpoint.hpp"
#include "cycleasr/pipeline.hpp"

using namespace cycleasr;

namespace {

namespace fs = std::filesystem;

// Wires every RunConfig knob to a flag so each command accepts the same
// key=value config files and overriding flags (flags win).
void attach_run_config(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--data-seed", cfg.data_seed, "corpus generation seed")
      ->capture_default_str();
  cmd->add_option("--n-paired", cfg.n_paired, "paired (audio+text) utterances")
      ->capture_default_str();
  cmd->add_option("--n-unpaired", cfg.n_unpaired, "audio-only utterances")
      ->capture_default_str();
  cmd->add_option("--n-text", cfg.n_text, "text-only sentences")->capture_default_str();
  cmd->add_option("--n-val", cfg.n_val, "validation utterances")->capture_default_str();
  cmd->add_option("--n-test", cfg.n_test, "test utterances")->capture_default_str();
  cmd->add_option("--min-words", cfg.min_words, "words per utterance, lower bound")
      ->capture_default_str();
  cmd->add_option("--max-words", cfg.max_words, "words per utterance, upper bound")
      ->capture_default_str();
  cmd->add_option("--feat-dim", cfg.synth.feat_dim, "feature vector width")
      ->capture_default_str();
  cmd->add_option("--dur-min", cfg.synth.dur_min, "frames per character, lower bound")
      ->capture_default_str();
  cmd->add_option("--dur-max", cfg.synth.dur_max, "frames per character, upper bound")
      ->capture_default_str();
  cmd->add_option("--noise-std", cfg.synth.noise_std, "per-frame noise level")
      ->capture_default_str();
  cmd->add_option("--speaker-offset-std", cfg.synth.speaker_offset_std,
                  "per-utterance feature offset spread")
      ->capture_default_str();
  cmd->add_option("--speaker-scale-min", cfg.synth.speaker_scale_min,
                  "per-utterance feature scale, lower bound")
      ->capture_default_str();
  cmd->add_option("--speaker-scale-max", cfg.synth.speaker_scale_max,
                  "per-utterance feature scale, upper bound")
      ->capture_default_str();
  cmd->add_option("--lexicon-size", cfg.synth.lexicon_size, "distinct words in the world")
      ->capture_default_str();
  cmd->add_option("--word-len-min", cfg.synth.word_len_min, "characters per word, lower")
      ->capture_default_str();
  cmd->add_option("--word-len-max", cfg.synth.word_len_max, "characters per word, upper")
      ->capture_default_str();

  cmd->add_option("--asr-hidden", cfg.asr_hidden, "encoder cells per direction")
      ->capture_default_str();
  cmd->add_option("--asr-layers", cfg.asr_layers, "encoder layers (each halves T)")
      ->capture_default_str();
  cmd->add_option("--asr-embed", cfg.asr_embed, "character embedding width")
      ->capture_default_str();
  cmd->add_option("--asr-dec-hidden", cfg.asr_dec_hidden, "decoder LSTM cells")
      ->capture_default_str();
  cmd->add_option("--att-dim", cfg.att_dim, "attention projection width")
      ->capture_default_str();
  cmd->add_option("--att-filters", cfg.att_filters, "location-attention filters")
      ->capture_default_str();
  cmd->add_option("--att-kernel", cfg.att_kernel, "location-attention kernel width (odd)")
      ->capture_default_str();

  cmd->add_option("--tte-embed", cfg.tte_embed, "reconstruction embedding width")
      ->capture_default_str();
  cmd->add_option("--tte-conv-layers", cfg.tte_conv_layers, "text-encoder conv layers")
      ->capture_default_str();
  cmd->add_option("--tte-conv-filters", cfg.tte_conv_filters, "text-encoder conv filters")
      ->capture_default_str();
  cmd->add_option("--tte-conv-kernel", cfg.tte_conv_kernel,
                  "text-encoder conv kernel width (odd)")
      ->capture_default_str();
  cmd->add_option("--tte-enc-hidden", cfg.tte_enc_hidden,
                  "text-encoder cells per direction")
      ->capture_default_str();
  cmd->add_option("--tte-att-dim", cfg.tte_att_dim, "reconstruction attention width")
      ->capture_default_str();
  cmd->add_option("--tte-att-filters", cfg.tte_att_filters,
                  "reconstruction attention filters")
      ->capture_default_str();
  cmd->add_option("--tte-att-kernel", cfg.tte_att_kernel,
                  "reconstruction attention kernel width (odd)")
      ->capture_default_str();
  cmd->add_option("--tte-prenet", cfg.tte_prenet, "prenet hidden width")
      ->capture_default_str();
  cmd->add_option("--tte-dec-hidden", cfg.tte_dec_hidden, "reconstruction decoder cells")
      ->capture_default_str();
  cmd->add_option("--tte-dec-layers", cfg.tte_dec_layers, "reconstruction decoder layers")
      ->capture_default_str();
  cmd->add_option("--tte-postnet-layers", cfg.tte_postnet_layers, "postnet conv layers")
      ->capture_default_str();
  cmd->add_option("--tte-postnet-filters", cfg.tte_postnet_filters, "postnet conv filters")
      ->capture_default_str();
  cmd->add_option("--tte-postnet-kernel", cfg.tte_postnet_kernel,
                  "postnet conv kernel width (odd)")
      ->capture_default_str();
  cmd->add_option("--dropout", cfg.dropout, "prenet dropout rate (stays on when generating)")
      ->capture_default_str();
  cmd->add_option("--zoneout", cfg.zoneout, "decoder zoneout rate")->capture_default_str();
  cmd->add_option("--stop-threshold", cfg.stop_threshold,
                  "free-running stop probability threshold")
      ->capture_default_str();

  cmd->add_option("--lm-embed", cfg.lm_embed, "language-model embedding width")
      ->capture_default_str();
  cmd->add_option("--lm-hidden", cfg.lm_hidden, "language-model LSTM cells")
      ->capture_default_str();
  cmd->add_option("--lm-layers", cfg.lm_layers, "language-model LSTM layers")
      ->capture_default_str();

  cmd->add_option("--train-seed", cfg.train_seed, "training seed")->capture_default_str();
  cmd->add_option("--sup-epochs", cfg.sup_epochs, "supervised pre-training epochs")
      ->capture_default_str();
  cmd->add_option("--sup-lr", cfg.sup_lr, "supervised pre-training step size")
      ->capture_default_str();
  cmd->add_option("--tte-epochs", cfg.tte_epochs, "reconstruction training epochs")
      ->capture_default_str();
  cmd->add_option("--tte-lr", cfg.tte_lr, "reconstruction training step size")
      ->capture_default_str();
  cmd->add_option("--lm-epochs", cfg.lm_epochs, "language-model training epochs")
      ->capture_default_str();
  cmd->add_option("--lm-lr", cfg.lm_lr, "language-model training step size")
      ->capture_default_str();
  cmd->add_option("--cycle-epochs", cfg.cycle_epochs, "alternating training epochs")
      ->capture_default_str();
  cmd->add_option("--lr-paired", cfg.lr_paired, "step size of interleaved paired steps")
      ->capture_default_str();
  cmd->add_option("--lr-unpaired", cfg.lr_unpaired, "step size of unpaired-objective steps")
      ->capture_default_str();
  cmd->add_option("--paired-per-block", cfg.paired_per_block,
                  "paired steps per interleave block")
      ->capture_default_str();
  cmd->add_option("--unpaired-per-block", cfg.unpaired_per_block,
                  "unpaired steps per interleave block")
      ->capture_default_str();
  cmd->add_option("--n-samples", cfg.n_samples, "sampled hypotheses per unpaired utterance")
      ->capture_default_str();
  cmd->add_option("--temperature", cfg.temperature, "sampling temperature")
      ->capture_default_str();
  cmd->add_option("--ce-weight", cfg.ce_weight, "pseudo-label cross-entropy weight")
      ->capture_default_str();
  cmd->add_option("--ce-k", cfg.ce_k, "sampled pseudo labels per utterance")
      ->capture_default_str();

  cmd->add_option("--beam", cfg.beam, "beam width for test decoding")->capture_default_str();
  cmd->add_option("--val-beam", cfg.val_beam,
                  "beam width for per-epoch validation and pseudo labels")
      ->capture_default_str();
  cmd->add_option("--min-ratio", cfg.min_ratio,
                  "minimum output characters per subsampled frame")
      ->capture_default_str();
  cmd->add_option("--max-ratio", cfg.max_ratio,
                  "maximum output characters per subsampled frame")
      ->capture_default_str();
  cmd->add_option("--lm-weight", cfg.lm_weight, "shallow-fusion weight")
      ->capture_default_str();
}

// Flat key=value config file: one `name=value` per line, names matching the
// command's long flags without the leading dashes. Blank lines and #-comments
// are skipped, unknown keys rejected, and flags given on the command line win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  const auto trim = [](std::string s) {
    const size_t a = s.find_first_not_of(" \t\r");
    const size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const size_t eq = text.find('=');
    const std::string where = path + ":" + std::to_string(line_no);
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value, got '" + text + "'");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError(where + ": unknown config key '" + key + "'");
    if (opt->count() > 0) continue;  // explicit flag beats the file
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void ensure_writable(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw IoError("refusing to overwrite " + path.string() + " (pass --force)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_curve_csv(const std::vector<Real>& curve, int first_epoch,
                     const std::string& path, const std::string& column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch," << column << "\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    out << (first_epoch + static_cast<int>(i)) << "," << std::setprecision(17)
        << curve[i] << "\n";
  }
}

std::vector<Utterance> load_split(const fs::path& dir, const std::string& name) {
  return load_dataset((dir / name).string());
}

Vocab load_vocab(const fs::path& dir) { return Vocab::load((dir / "vocab.txt").string()); }

// Shared loaders for commands that start from trained weights. The model is
// built at the command's sizes, so a checkpoint from different sizes fails
// up front with a name/shape mismatch instead of computing nonsense.
AsrModel load_asr(const RunConfig& cfg, const Vocab& vocab, const std::string& ckpt) {
  Rng throwaway(0);
  AsrModel asr(asr_config(cfg), vocab, throwaway);
  load_checkpoint(asr.params(), ckpt);
  return asr;
}

TteModel load_tte(const RunConfig& cfg, const Vocab& vocab, const std::string& ckpt) {
  Rng throwaway(0);
  TteModel tte(tte_config(cfg), vocab, throwaway);
  load_checkpoint(tte.params(), ckpt);
  return tte;
}

void print_best(const TrainResult& result) {
  if (result.best_epoch < 1 || result.log.rows.empty()) return;
  const MetricsLog::Row& row = result.log.rows[static_cast<size_t>(result.best_epoch - 1)];
  std::printf("best epoch %d  val acc %.4f  val wer %.4f\n", result.best_epoch,
              result.best_val_acc, row.val_wer);
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, bool force) {
  const fs::path dir(out_dir);
  const std::vector<std::string> names = {"paired.jsonl", "unpaired.jsonl", "oracle.jsonl",
                                          "text.jsonl",   "val.jsonl",      "test.jsonl",
                                          "vocab.txt"};
  fs::create_directories(dir);
  for (const std::string& name : names) ensure_writable(dir / name, force);

  CorpusSplits corpus = make_corpus(cfg);
  save_dataset(corpus.paired, (dir / "paired.jsonl").string());
  save_dataset(corpus.unpaired, (dir / "unpaired.jsonl").string());
  save_dataset(corpus.oracle, (dir / "oracle.jsonl").string());
  save_dataset(corpus.text_only, (dir / "text.jsonl").string());
  save_dataset(corpus.validation, (dir / "val.jsonl").string());
  save_dataset(corpus.test, (dir / "test.jsonl").string());
  corpus.vocab.save((dir / "vocab.txt").string());
  std::cout << "wrote " << corpus.paired.size() << " paired, " << corpus.unpaired.size()
            << " unpaired, " << corpus.text_only.size() << " text-only, "
            << corpus.validation.size() << " validation, " << corpus.test.size()
            << " test utterances to " << dir.string() << "\n";
  return 0;
}

int cmd_train_sup(const RunConfig& cfg, const std::string& data_dir,
                  const std::string& init, const std::string& out,
                  const std::string& curve, bool force) {
  ensure_writable(out, force);
  if (!curve.empty()) ensure_writable(curve, force);
  const fs::path dir(data_dir);
  const Vocab vocab = load_vocab(dir);
  Rng rng(cfg.train_seed);
  AsrModel asr(asr_config(cfg), vocab, rng);
  if (!init.empty()) load_checkpoint(asr.params(), init);
  const TteModel idle_tte(tte_config(cfg), vocab, rng);  // unused by supervised steps

  TrainResult result = pretrain_supervised(asr, idle_tte, load_split(dir, "paired.jsonl"),
                                           load_split(dir, "val.jsonl"), cfg,
                                           cfg.sup_epochs, cfg.sup_lr, rng);
  save_checkpoint(asr.params(), out);
  if (!curve.empty()) export_curves(result.log, curve);
  print_best(result);
  return 0;
}

int cmd_train_tte(const RunConfig& cfg, const std::string& data_dir,
                  const std::string& asr_ckpt, const std::string& out,
                  const std::string& curve, bool force) {
  ensure_writable(out, force);
  if (!curve.empty()) ensure_writable(curve, force);
  const fs::path dir(data_dir);
  const Vocab vocab = load_vocab(dir);
  const AsrModel asr = load_asr(cfg, vocab, asr_ckpt);
  Rng rng(cfg.train_seed);
  TteModel tte(tte_config(cfg), vocab, rng);

  const std::vector<TtePair> pairs = make_tte_pairs(asr, load_split(dir, "paired.jsonl"));
  const std::vector<Real> losses = tte_train(tte, pairs, {cfg.tte_epochs, cfg.tte_lr}, rng);
  save_checkpoint(tte.params(), out);
  if (!curve.empty()) write_curve_csv(losses, 0, curve, "tte_loss");
  std::printf("reconstruction loss %.6f -> %.6f over %d epochs\n", losses.front(),
              losses.back(), cfg.tte_epochs);
  return 0;
}

int cmd_train_lm(const RunConfig& cfg, const std::string& data_dir, const std::string& out,
                 const std::string& curve, bool force) {
  ensure_writable(out, force);
  if (!curve.empty()) ensure_writable(curve, force);
  const fs::path dir(data_dir);
  const Vocab vocab = load_vocab(dir);
  Rng rng(cfg.train_seed);
  LmModel lm(lm_config(cfg), vocab, rng);

  std::vector<std::string> texts;
  for (const Utterance& u : load_split(dir, "text.jsonl")) {
    if (u.has_text()) texts.push_back(*u.text);
  }
  const std::vector<Real> ppl = lm_train(lm, texts, {cfg.lm_epochs, cfg.lm_lr}, rng);
  save_checkpoint(lm.params(), out);
  if (!curve.empty()) write_curve_csv(ppl, 1, curve, "perplexity");
  std::printf("training perplexity %.4f -> %.4f over %d epochs\n", ppl.front(), ppl.back(),
              cfg.lm_epochs);
  return 0;
}

int cmd_train_cycle(const RunConfig& cfg, const std::string& data_dir,
                    const std::string& asr_ckpt, const std::string& tte_ckpt,
                    const std::string& mode_name, const std::string& out,
                    const std::string& curve, const std::string& svg, bool force) {
  ensure_writable(out, force);
  if (!curve.empty()) ensure_writable(curve, force);
  if (!svg.empty()) ensure_writable(svg, force);
  const fs::path dir(data_dir);
  const Vocab vocab = load_vocab(dir);
  AsrModel asr = load_asr(cfg, vocab, asr_ckpt);
  const TteModel tte = load_tte(cfg, vocab, tte_ckpt);
  Rng rng(cfg.train_seed);

  const CycleMode mode = mode_name == "cycle" ? CycleMode::cycle
                         : mode_name == "ce1" ? CycleMode::ce_1best
                                              : CycleMode::ce_ksample;
  TrainResult result = train_alternating(asr, tte, load_split(dir, "paired.jsonl"),
                                         load_split(dir, "unpaired.jsonl"),
                                         load_split(dir, "val.jsonl"), mode,
                                         schedule_config(cfg), rng);
  save_checkpoint(asr.params(), out);
  if (!curve.empty()) export_curves(result.log, curve, svg);
  print_best(result);
  return 0;
}

int cmd_decode(const RunConfig& cfg, const std::string& data_dir, const std::string& input,
               const std::string& asr_ckpt, const std::string& lm_ckpt,
               const std::string& out, bool force) {
  ensure_writable(out, force);
  const fs::path dir(data_dir);
  const Vocab vocab = load_vocab(dir);
  const AsrModel asr = load_asr(cfg, vocab, asr_ckpt);

  Rng throwaway(0);
  LmModel lm(lm_config(cfg), vocab, throwaway);
  BeamConfig bc = beam_config(cfg);
  if (!lm_ckpt.empty()) {
    load_checkpoint(lm.params(), lm_ckpt);
    bc.fusion = &lm;
    bc.fusion_weight = cfg.lm_weight;
  }

  const std::string in_path = input.empty() ? (dir / "test.jsonl").string() : input;
  std::ofstream sink(out);
  if (!sink) throw IoError("cannot write " + out);
  NoGradScope guard;
  int decoded = 0, skipped = 0;
  for (const Utterance& u : load_dataset(in_path)) {
    if (!u.has_features()) {
      ++skipped;
      continue;
    }
    const std::vector<Hypothesis> hyps = asr.beam_search(u.features, bc);
    const std::string text = hyps.empty() ? "" : vocab.decode(hyps.front().tokens);
    const Real score = hyps.empty() ? 0 : hyps.front().score;
    sink << u.id << "\t" << text << "\t" << std::fixed << std::setprecision(6) << score
         << "\n";
    ++decoded;
  }
  std::cout << "decoded " << decoded << " utterances to " << out;
  if (skipped > 0) std::cout << " (skipped " << skipped << " without features)";
  std::cout << "\n";
  return 0;
}

std::map<std::string, std::string> read_hyp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::map<std::string, std::string> hyps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t first = line.find('\t');
    if (first == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected id<TAB>text<TAB>score");
    }
    const size_t second = line.find('\t', first + 1);
    const std::string text = second == std::string::npos
                                 ? line.substr(first + 1)
                                 : line.substr(first + 1, second - first - 1);
    hyps[line.substr(0, first)] = text;
  }
  return hyps;
}

int cmd_score(const std::string& hyp_path, const std::string& ref_path) {
  const std::map<std::string, std::string> hyps = read_hyp_file(hyp_path);
  std::map<std::string, std::string> refs;
  for (const Utterance& u : load_dataset(ref_path)) {
    if (u.has_text()) refs[u.id] = *u.text;
  }
  if (refs.empty()) throw InputError("score: reference file holds no transcripts");
  const ScoreReport wer = score_corpus(hyps, refs, ScoreUnit::word);
  const ScoreReport cer = score_corpus(hyps, refs, ScoreUnit::character);
  std::printf("WER %.4f  (sub %d  ins %d  del %d  / %ld words)\n", wer.wer, wer.subs,
              wer.ins, wer.dels, wer.ref_len);
  std::printf("CER %.4f  (sub %d  ins %d  del %d  / %ld chars)\n", cer.cer, cer.subs,
              cer.ins, cer.dels, cer.ref_len);
  return 0;
}

int cmd_reproduce(const RunConfig& cfg, std::vector<std::uint64_t> seeds, bool with_ce5,
                  bool no_lm, const std::string& table_path, bool force) {
  if (!table_path.empty()) ensure_writable(table_path, force);
  BenchmarkOptions opt;
  if (!seeds.empty()) opt.seeds = std::move(seeds);
  opt.run_ce5 = with_ce5;
  opt.run_lm = !no_lm;
  opt.progress = &std::cerr;

  const BenchmarkResult result = run_benchmark(cfg, opt);
  print_benchmark(result, std::cout);
  if (!table_path.empty()) {
    std::ofstream out(table_path);
    if (!out) throw IoError("cannot write " + table_path);
    print_benchmark(result, out);
  }
  std::printf("gates: relative-improvement %s, cycle<=ce1 %s, oracle-lowest %s",
              result.gate_relative_improvement ? "pass" : "FAIL",
              result.gate_cycle_beats_ce1 ? "pass" : "FAIL",
              result.gate_oracle_lowest ? "pass" : "FAIL");
  if (opt.run_lm) {
    std::printf(", lm-no-harm %s, lm-majority %s",
                result.gate_lm_no_harm ? "pass" : "FAIL",
                result.gate_lm_majority ? "pass" : "FAIL");
  }
  std::printf("\n");
  return result.pass(opt.run_lm) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistency training for attention speech recognition on a "
               "synthetic desk-scale corpus"};
  app.require_subcommand(1);

  RunConfig cfg;
  bool force = false;
  int threads = 1;
  std::string data_dir, out_path, curve_path, svg_path, init_ckpt;
  std::string asr_ckpt, tte_ckpt, lm_ckpt, mode_name = "cycle", input_path;
  std::string hyp_path, ref_path, table_path, config_path;
  std::vector<std::uint64_t> seeds;
  bool with_ce5 = false, no_lm = false;

  const auto add_common = [&](CLI::App* cmd, bool seed_is_data) {
    attach_run_config(cmd, cfg);
    cmd->add_option("--config", config_path,
                    "flat key=value config file; flags override it");
    cmd->add_option("--threads", threads,
                    "worker cap; 1 (the only implemented level) is bitwise reproducible")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--force", force, "overwrite existing output files");
    CLI::Option* seed = cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&cfg, seed_is_data](std::uint64_t v) {
          if (seed_is_data) {
            cfg.data_seed = v;
          } else {
            cfg.train_seed = v;
          }
        },
        seed_is_data ? "alias for --data-seed" : "alias for --train-seed");
    seed->excludes(cmd->get_option(seed_is_data ? "--data-seed" : "--train-seed"));
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpus splits");
  gen->add_option("--out", data_dir, "output directory")->required();
  add_common(gen, true);

  CLI::App* sup = app.add_subcommand("train-sup", "supervised pre-training on paired data");
  sup->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  sup->add_option("--init", init_ckpt, "checkpoint to resume from");
  sup->add_option("--out", out_path, "recognizer checkpoint to write")->required();
  sup->add_option("--curve", curve_path, "per-epoch metrics CSV");
  add_common(sup, false);

  CLI::App* ttec = app.add_subcommand("train-tte",
                                      "reconstruction training against a recognizer");
  ttec->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  ttec->add_option("--asr", asr_ckpt, "pre-trained recognizer checkpoint")->required();
  ttec->add_option("--out", out_path, "reconstruction checkpoint to write")->required();
  ttec->add_option("--curve", curve_path, "per-epoch loss CSV");
  add_common(ttec, false);

  CLI::App* lmc = app.add_subcommand("train-lm", "language-model training on text-only data");
  lmc->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  lmc->add_option("--out", out_path, "language-model checkpoint to write")->required();
  lmc->add_option("--curve", curve_path, "per-epoch perplexity CSV");
  add_common(lmc, false);

  CLI::App* cyc = app.add_subcommand("train-cycle",
                                     "alternating training with unpaired audio");
  cyc->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  cyc->add_option("--asr", asr_ckpt, "pre-trained recognizer checkpoint")->required();
  cyc->add_option("--tte", tte_ckpt, "pre-trained reconstruction checkpoint")->required();
  cyc->add_option("--mode", mode_name, "unpaired objective")
      ->check(CLI::IsMember({"cycle", "ce1", "ce5"}))
      ->capture_default_str();
  cyc->add_option("--out", out_path, "recognizer checkpoint to write")->required();
  cyc->add_option("--curve", curve_path, "per-epoch metrics CSV");
  cyc->add_option("--svg", svg_path, "learning-curve plot");
  add_common(cyc, false);

  CLI::App* dec = app.add_subcommand("decode", "beam-search decoding to id/text/score lines");
  dec->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  dec->add_option("--input", input_path, "utterance file (default: test split)");
  dec->add_option("--asr", asr_ckpt, "recognizer checkpoint")->required();
  dec->add_option("--lm", lm_ckpt, "language-model checkpoint for shallow fusion");
  dec->add_option("--out", out_path, "hypothesis file to write")->required();
  add_common(dec, false);

  CLI::App* sco = app.add_subcommand("score", "score a hypothesis file against references");
  sco->add_option("--hyp", hyp_path, "decode output file")->required();
  sco->add_option("--ref", ref_path, "reference dataset (jsonl)")->required();

  CLI::App* rep = app.add_subcommand("reproduce",
                                     "full benchmark: baseline/cycle/ce1/oracle table");
  rep->add_option("--seeds", seeds, "training seeds (median reported)")->delimiter(',');
  rep->add_flag("--ce5", with_ce5, "include the sampled pseudo-label row");
  rep->add_flag("--no-lm", no_lm, "skip the shallow-fusion row");
  rep->add_option("--table", table_path, "also write the table to this file");
  add_common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 0 is --help/--version; everything else is usage
  }

  try {
    if (!config_path.empty()) apply_config_file(app.get_subcommands().front(), config_path);
    if (threads > 1) {
      std::cerr << "note: multi-threaded execution is not implemented; running on one "
                   "thread\n";
    }
    if (gen->parsed()) return cmd_gen_data(cfg, data_dir, force);
    if (sup->parsed()) {
      return cmd_train_sup(cfg, data_dir, init_ckpt, out_path, curve_path, force);
    }
    if (ttec->parsed()) {
      return cmd_train_tte(cfg, data_dir, asr_ckpt, out_path, curve_path, force);
    }
    if (lmc->parsed()) return cmd_train_lm(cfg, data_dir, out_path, curve_path, force);
    if (cyc->parsed()) {
      return cmd_train_cycle(cfg, data_dir, asr_ckpt, tte_ckpt, mode_name, out_path,
                             curve_path, svg_path, force);
    }
    if (dec->parsed()) {
      return cmd_decode(cfg, data_dir, input_path, asr_ckpt, lm_ckpt, out_path, force);
    }
    if (sco->parsed()) return cmd_score(hyp_path, ref_path);
    if (rep->parsed()) {
      return cmd_reproduce(cfg, seeds, with_ce5, no_lm, table_path, force);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
