#include "cycleasr/eval.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace cycleasr {

EditCounts edit_distance(const std::vector<std::string>& a,
                         const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<EditCounts> dp((n + 1) * (m + 1));
  auto cell = [&](size_t i, size_t j) -> EditCounts& { return dp[i * (m + 1) + j]; };
  for (size_t j = 1; j <= m; ++j) {
    cell(0, j) = {static_cast<int>(j), 0, static_cast<int>(j), 0};
  }
  for (size_t i = 1; i <= n; ++i) {
    cell(i, 0) = {static_cast<int>(i), 0, 0, static_cast<int>(i)};
  }
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const bool match = a[i - 1] == b[j - 1];
      EditCounts diag = cell(i - 1, j - 1);
      if (!match) {
        ++diag.distance;
        ++diag.subs;
      }
      EditCounts del = cell(i - 1, j);
      ++del.distance;
      ++del.dels;
      EditCounts ins = cell(i, j - 1);
      ++ins.distance;
      ++ins.ins;
      // Tie order: substitution, then deletion, then insertion.
      EditCounts best = diag;
      if (del.distance < best.distance) best = del;
      if (ins.distance < best.distance) best = ins;
      cell(i, j) = best;
    }
  }
  return cell(n, m);
}

Real ScoreReport::rate() const {
  if (ref_len == 0) return 0;
  return static_cast<Real>(subs + ins + dels) / static_cast<Real>(ref_len);
}

std::vector<std::string> char_tokens(const std::string& text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  for (char c : text) out.emplace_back(1, c);
  return out;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

ScoreReport score_corpus(const std::map<std::string, std::string>& hyps,
                         const std::map<std::string, std::string>& refs, ScoreUnit unit) {
  if (refs.empty()) throw InputError("score_corpus: empty reference corpus");
  auto tokenize = unit == ScoreUnit::character ? char_tokens : word_tokens;
  ScoreReport report;
  for (const auto& [id, ref_text] : refs) {
    const std::vector<std::string> ref = tokenize(ref_text);
    report.ref_len += static_cast<long>(ref.size());
    auto it = hyps.find(id);
    if (it == hyps.end()) {
      std::cerr << "warning: no hypothesis for utterance '" << id
                << "', scoring as full deletion\n";
      report.dels += static_cast<int>(ref.size());
      continue;
    }
    EditCounts c = edit_distance(ref, tokenize(it->second));
    report.subs += c.subs;
    report.ins += c.ins;
    report.dels += c.dels;
  }
  if (unit == ScoreUnit::character) {
    report.cer = report.rate();
  } else {
    report.wer = report.rate();
  }
  return report;
}

namespace {

void write_svg(const MetricsLog& log, const std::string& path) {
  const int W = 480, H = 320, pad = 40;
  const size_t n = log.rows.size();
  auto series_line = [&](auto value_of, const char* color) {
    Real lo = value_of(log.rows[0]), hi = lo;
    for (const auto& r : log.rows) {
      lo = std::min(lo, value_of(r));
      hi = std::max(hi, value_of(r));
    }
    const Real span = hi - lo > 0 ? hi - lo : Real(1);
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (size_t i = 0; i < n; ++i) {
      const Real x = pad + (n > 1 ? (W - 2 * pad) * static_cast<Real>(i) / (n - 1) : 0);
      const Real y = H - pad - (H - 2 * pad) * (value_of(log.rows[i]) - lo) / span;
      os << x << "," << y << " ";
    }
    os << "\"/>\n";
    return os.str();
  };
  std::ofstream os(path);
  if (!os) throw IoError("cannot write plot: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">"
     << "blue: cycle loss (rescaled)  red: validation WER (rescaled)</text>\n"
     << series_line([](const MetricsLog::Row& r) { return r.cycle_loss; }, "blue")
     << series_line([](const MetricsLog::Row& r) { return r.val_wer; }, "red") << "</svg>\n";
}

}  // namespace

void export_curves(const MetricsLog& log, const std::string& csv_path,
                   const std::string& svg_path) {
  if (log.rows.empty()) throw InputError("export_curves: empty metrics log");
  std::ofstream os(csv_path);
  if (!os) throw IoError("cannot write curves: " + csv_path);
  os << "epoch,cycle_loss,val_acc,val_cer,val_wer\n";
  os << std::setprecision(17);
  for (const auto& r : log.rows) {
    os << r.epoch << "," << r.cycle_loss << "," << r.val_acc << "," << r.val_cer << ","
       << r.val_wer << "\n";
  }
  if (!os) throw IoError("failed while writing curves: " + csv_path);
  if (!svg_path.empty()) {
    try {
      write_svg(log, svg_path);
    } catch (const std::exception& e) {
      std::cerr << "warning: plot rendering failed: " << e.what() << "\n";
    }
  }
}

MetricsLog import_curves(const std::string& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw IoError("cannot open curves: " + csv_path);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,cycle_loss,val_acc,val_cer,val_wer") {
    throw FormatError(csv_path + ": unexpected curve header");
  }
  MetricsLog log;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricsLog::Row row;
    char comma;
    if (!(ls >> row.epoch >> comma >> row.cycle_loss >> comma >> row.val_acc >> comma >>
          row.val_cer >> comma >> row.val_wer)) {
      throw FormatError(csv_path + ":" + std::to_string(line_no) + ": malformed row");
    }
    log.rows.push_back(row);
  }
  return log;
}

}  // namespace cycleasr
