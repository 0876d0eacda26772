// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace b2t {

using LabelSequence = std::vector<int>;
using WordSequence = std::vector<std::string>;

/// Lowercases, expands the fixed contraction/abbreviation table, strips
/// punctuation and splits on whitespace. Idempotent.
WordSequence normalize_for_eval(std::string_view text);

/// The contraction and abbreviation expansions applied by normalize_for_eval,
/// in lookup order. Exposed so docs and tests can enumerate it.
const std::vector<std::pair<std::string, std::string>>& contraction_table();

inline constexpr int kBlankId = 0;

/// 39 stressless ARPAbet phonemes plus a word separator. CTC ids are
/// offset by one so that id 0 stays the blank.
class PhonemeInventory {
 public:
  PhonemeInventory();

  static constexpr std::string_view kSeparator = "|";

  const std::vector<std::string>& symbols() const { return symbols_; }
  /// Alphabet size excluding blank.
  int size() const { return static_cast<int>(symbols_.size()); }
  int num_classes() const { return size() + 1; }
  int id_of(std::string_view symbol) const;
  const std::string& symbol_of(int id) const;
  bool contains(std::string_view symbol) const;
  int separator_id() const { return id_of(kSeparator); }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> index_;
};

/// Word → phoneme pronunciations with a letter-to-sound fallback for
/// out-of-vocabulary words.
class Lexicon {
 public:
  /// The small lexicon compiled into the library.
  static Lexicon bundled();
  /// Two-column text file: `WORD  PH1 PH2 ...`. CMU dictionary files load
  /// directly: `;;;` comments and `WORD(2)` variants are skipped and stress
  /// digits are stripped.
  static Lexicon from_file(const std::filesystem::path& path);
  static Lexicon from_text(std::string_view text);

  bool contains(const std::string& word) const { return entries_.count(word) > 0; }
  std::vector<std::string> pronounce(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }
  void merge(const Lexicon& other);

  /// Letter-to-sound rules used for OOV words. Never fails; output
  /// symbols are always inventory members.
  static std::vector<std::string> fallback(const std::string& word);

 private:
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

/// Per-word pronunciations joined by the separator symbol. Input is split
/// on whitespace and is expected to be normalized already.
std::vector<std::string> grapheme_to_phoneme(std::string_view text, const Lexicon& lexicon);

class BpeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Byte-pair-encoding model over Unicode code points. Spaces are rewritten
/// to U+2581 and start a new segment, so merges never cross word
/// boundaries and decoding is exact.
class BpeModel {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;
  static constexpr std::string_view kSpaceMarker = "\xE2\x96\x81";

  static BpeModel train(const std::vector<std::string>& corpus, int vocab_size);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  int vocab_size() const { return static_cast<int>(units_.size()); }
  const std::string& unit(int id) const;
  std::optional<int> id_of(const std::string& unit) const;

  void save(const std::filesystem::path& merges_file, const std::filesystem::path& vocab_file) const;
  static BpeModel load(const std::filesystem::path& merges_file, const std::filesystem::path& vocab_file);
  std::string merges_text() const;
  std::string vocab_text() const;
  static BpeModel from_text(std::string_view merges, std::string_view vocab_json);

 private:
  void rebuild_index();
  std::vector<std::string> apply_merges(std::vector<std::string> units) const;

  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> units_;  // id → unit string
  std::unordered_map<std::string, int> unit_ids_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

/// Splits a UTF-8 string into code points. Invalid bytes become single-byte units.
std::vector<std::string> utf8_codepoints(std::string_view text);

enum class LabelMode { phoneme, bpe };

LabelMode parse_label_mode(std::string_view s);
std::string_view to_string(LabelMode mode);

/// CTC targets. Phoneme mode: inventory ids. BPE mode: every non-special
/// BPE unit u maps to id u - kNumSpecial + 1, leaving 0 for blank.
struct CtcLabeler {
  LabelMode mode = LabelMode::phoneme;
  PhonemeInventory inventory;
  Lexicon lexicon = Lexicon::bundled();
  std::optional<BpeModel> bpe;

  int num_classes() const;
  LabelSequence build(std::string_view transcription) const;
  /// Symbol strings for scoring label sequences (phonemes or BPE units).
  std::vector<std::string> symbols(const LabelSequence& labels) const;
};

}  // namespace b2t
