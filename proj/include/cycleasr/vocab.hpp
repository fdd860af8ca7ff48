#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cycleasr/common.hpp"

namespace cycleasr {

// Character inventory with dense token ids: pad=0, sos=1, eos=2, then the
// characters in order. The decoder's output space is eos plus the
// characters, indexed as out_index = token_id - 2 (eos -> 0).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstChar = 3;

  static Vocab from_chars(const std::string& chars);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return kFirstChar + static_cast<int>(chars_.size()); }
  int char_count() const { return static_cast<int>(chars_.size()); }
  // Decoder output classes: eos plus every character.
  int out_size() const { return 1 + char_count(); }

  bool knows(char c) const { return to_id_.count(c) > 0; }
  int id_of(char c) const;
  char char_of(int id) const;
  const std::string& chars() const { return chars_; }

  // Character tokens only, no sentinels.
  std::vector<int> encode(const std::string& text) const;
  // Drops pad/sos/eos.
  std::string decode(const std::vector<int>& ids) const;

  static int to_out_index(int token_id) { return token_id - 2; }
  static int to_token_id(int out_index) { return out_index + 2; }

 private:
  std::string chars_;
  std::unordered_map<char, int> to_id_;
};

// Validates the decoder-target layout (character ids followed by one final
// eos); throws InputError naming the offending caller otherwise.
void check_target_tokens(const std::vector<int>& tokens, const Vocab& vocab,
                         const std::string& who);

}  // namespace cycleasr
