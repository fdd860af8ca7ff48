#include "cycleasr/vocab.hpp"

#include <fstream>

namespace cycleasr {

namespace {
const char* kReserved[] = {"<pad>", "<sos>", "<eos>"};
}

Vocab Vocab::from_chars(const std::string& chars) {
  if (chars.empty()) throw ConfigError("Vocab: empty character set");
  Vocab v;
  v.chars_ = chars;
  for (size_t i = 0; i < chars.size(); ++i) {
    char c = chars[i];
    if (v.to_id_.count(c)) {
      throw ConfigError(std::string("Vocab: duplicate character '") + c + "'");
    }
    v.to_id_[c] = kFirstChar + static_cast<int>(i);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary file: " + path);
  std::string line;
  int line_no = 0;
  std::string chars;
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no <= 3) {
      if (line != kReserved[line_no - 1]) {
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": expected reserved token " + kReserved[line_no - 1]);
      }
      continue;
    }
    if (line.size() != 1) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected a single character per line");
    }
    chars.push_back(line[0]);
  }
  if (line_no < 3) throw FormatError(path + ": missing reserved token lines");
  return from_chars(chars);
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write vocabulary file: " + path);
  for (const char* r : kReserved) os << r << "\n";
  for (char c : chars_) os << c << "\n";
}

int Vocab::id_of(char c) const {
  auto it = to_id_.find(c);
  if (it == to_id_.end()) {
    throw InputError(std::string("Vocab: unknown character '") + c + "'");
  }
  return it->second;
}

char Vocab::char_of(int id) const {
  if (id < kFirstChar || id >= size()) {
    throw InputError("Vocab: id " + std::to_string(id) + " is not a character token");
  }
  return chars_[static_cast<size_t>(id - kFirstChar)];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id_of(c));
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kFirstChar) continue;
    out.push_back(char_of(id));
  }
  return out;
}

void check_target_tokens(const std::vector<int>& tokens, const Vocab& vocab,
                         const std::string& who) {
  if (tokens.empty()) {
    throw InputError(who + ": empty target sequence");
  }
  if (tokens.back() != Vocab::kEos) {
    throw InputError(who + ": target must end with eos");
  }
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] < Vocab::kFirstChar || tokens[i] >= vocab.size()) {
      throw InputError(who + ": token id " + std::to_string(tokens[i]) +
                       " is not a character");
    }
  }
}

}  // namespace cycleasr
