// SPDX-License-Identifier: Apache-2.0
#include "b2t/textproc.hpp"
#include "b2t/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace b2t {

namespace detail {
extern const std::string_view kBundledLexicon;
}

namespace {

bool is_ascii_alnum(unsigned char c) { return c < 128 && std::isalnum(c) != 0; }

// Characters that split words rather than being deleted.
bool is_separator(unsigned char c) { return std::isspace(c) != 0 || c == '-' || c == '/' || c == '_'; }

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch)) != 0) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& contraction_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"ain't", "is not"},      {"aren't", "are not"},     {"can't", "cannot"},     {"couldn't", "could not"},
      {"didn't", "did not"},    {"doesn't", "does not"},   {"don't", "do not"},     {"hadn't", "had not"},
      {"hasn't", "has not"},    {"haven't", "have not"},   {"isn't", "is not"},     {"mustn't", "must not"},
      {"shouldn't", "should not"}, {"wasn't", "was not"},  {"weren't", "were not"}, {"won't", "will not"},
      {"wouldn't", "would not"}, {"i'm", "i am"},          {"you're", "you are"},   {"we're", "we are"},
      {"they're", "they are"},  {"he's", "he is"},         {"she's", "she is"},     {"it's", "it is"},
      {"that's", "that is"},    {"there's", "there is"},   {"what's", "what is"},   {"where's", "where is"},
      {"who's", "who is"},      {"let's", "let us"},       {"i've", "i have"},      {"you've", "you have"},
      {"we've", "we have"},     {"they've", "they have"},  {"i'll", "i will"},      {"you'll", "you will"},
      {"he'll", "he will"},     {"she'll", "she will"},    {"we'll", "we will"},    {"they'll", "they will"},
      {"it'll", "it will"},     {"i'd", "i would"},        {"you'd", "you would"},  {"he'd", "he would"},
      {"she'd", "she would"},   {"we'd", "we would"},      {"they'd", "they would"}, {"mr.", "mister"},
      {"mrs.", "missus"},       {"dr.", "doctor"},         {"vs.", "versus"},       {"etc.", "et cetera"},
  };
  return table;
}

WordSequence normalize_for_eval(std::string_view text) {
  std::string s(text);
  s = replace_all(std::move(s), "\xE2\x80\x99", "'");  // right single quote
  s = replace_all(std::move(s), "\xE2\x80\x98", "'");
  s = replace_all(std::move(s), "\xE2\x80\x94", " ");  // em dash
  s = replace_all(std::move(s), "\xE2\x80\x93", " ");  // en dash
  for (char& ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 128) ch = static_cast<char>(std::tolower(c));
    if (is_separator(c)) ch = ' ';
  }

  static const std::unordered_map<std::string, std::string> table = [] {
    std::unordered_map<std::string, std::string> m;
    for (const auto& [k, v] : contraction_table()) m.emplace(k, v);
    return m;
  }();

  auto keep_edge = [](unsigned char c) { return c >= 128 || is_ascii_alnum(c) || c == '\'' || c == '.'; };

  WordSequence out;
  for (std::string token : split_ws(s)) {
    std::size_t b = 0;
    std::size_t e = token.size();
    while (b < e && !keep_edge(static_cast<unsigned char>(token[b]))) ++b;
    while (e > b && !keep_edge(static_cast<unsigned char>(token[e - 1]))) --e;
    token = token.substr(b, e - b);
    // Abbreviations keep their period; contractions do not.
    auto it = table.find(token);
    if (it == table.end()) {
      while (!token.empty() && (token.back() == '.' || token.back() == '\'')) token.pop_back();
      it = table.find(token);
    }
    const std::string expanded = it != table.end() ? it->second : token;
    for (const std::string& word : split_ws(expanded)) {
      std::string clean;
      for (char ch : word) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 128 || is_ascii_alnum(c)) clean += ch;
      }
      if (!clean.empty()) out.push_back(std::move(clean));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phonemes

PhonemeInventory::PhonemeInventory()
    : symbols_{"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY", "F",
               "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",
               "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH", std::string(kSeparator)} {
  for (std::size_t i = 0; i < symbols_.size(); ++i) index_.emplace(symbols_[i], static_cast<int>(i) + 1);
}

int PhonemeInventory::id_of(std::string_view symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::invalid_argument("unknown phoneme: " + std::string(symbol));
  return it->second;
}

const std::string& PhonemeInventory::symbol_of(int id) const {
  if (id < 1 || id > size()) throw std::out_of_range("phoneme id out of range: " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id - 1)];
}

bool PhonemeInventory::contains(std::string_view symbol) const { return index_.find(symbol) != index_.end(); }

Lexicon Lexicon::bundled() { return from_text(detail::kBundledLexicon); }

Lexicon Lexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Lexicon Lexicon::from_text(std::string_view text) {
  static const PhonemeInventory inventory;
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind(";;;", 0) == 0) continue;
    auto cols = split_ws(line);
    if (cols.size() < 2) continue;
    std::string word = cols[0];
    if (word.find('(') != std::string::npos) continue;
    for (char& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::vector<std::string> phones;
    for (std::size_t i = 1; i < cols.size(); ++i) {
      std::string p = cols[i];
      while (!p.empty() && std::isdigit(static_cast<unsigned char>(p.back())) != 0) p.pop_back();
      if (!inventory.contains(p) || p == PhonemeInventory::kSeparator) {
        throw std::runtime_error("lexicon entry '" + cols[0] + "' has unknown phoneme '" + cols[i] + "'");
      }
      phones.push_back(std::move(p));
    }
    lex.entries_.emplace(std::move(word), std::move(phones));
  }
  return lex;
}

void Lexicon::merge(const Lexicon& other) {
  for (const auto& [w, p] : other.entries_) entries_[w] = p;
}

std::vector<std::string> Lexicon::pronounce(const std::string& word) const {
  auto it = entries_.find(word);
  if (it != entries_.end()) return it->second;
  return fallback(word);
}

std::vector<std::string> Lexicon::fallback(const std::string& word) {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> digraphs = {
      {"tch", {"CH"}}, {"ch", {"CH"}}, {"sh", {"SH"}}, {"th", {"TH"}}, {"ng", {"NG"}}, {"ph", {"F"}},
      {"ck", {"K"}},   {"wh", {"W"}},  {"qu", {"K", "W"}}, {"ee", {"IY"}}, {"ea", {"IY"}}, {"oo", {"UW"}},
      {"ou", {"AW"}},  {"ow", {"OW"}}, {"ai", {"EY"}}, {"ay", {"EY"}}, {"oa", {"OW"}}, {"oi", {"OY"}},
      {"oy", {"OY"}},  {"er", {"ER"}}, {"ir", {"ER"}}, {"ur", {"ER"}},
  };
  static const std::map<char, std::vector<std::string>> letters = {
      {'a', {"AE"}}, {'b', {"B"}},  {'c', {"K"}},  {'d', {"D"}},       {'e', {"EH"}}, {'f', {"F"}},  {'g', {"G"}},
      {'h', {"HH"}}, {'i', {"IH"}}, {'j', {"JH"}}, {'k', {"K"}},       {'l', {"L"}},  {'m', {"M"}},  {'n', {"N"}},
      {'o', {"AA"}}, {'p', {"P"}},  {'q', {"K"}},  {'r', {"R"}},       {'s', {"S"}},  {'t', {"T"}},  {'u', {"AH"}},
      {'v', {"V"}},  {'w', {"W"}},  {'x', {"K", "S"}}, {'z', {"Z"}},
  };
  static const std::vector<std::string> digit_words = {"zero", "one", "two", "three", "four",
                                                       "five", "six", "seven", "eight", "nine"};
  static const Lexicon bundled_lex = bundled();

  std::string w;
  for (char ch : word) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isalnum(c) != 0) w += static_cast<char>(std::tolower(c));
  }
  // Silent final e.
  if (w.size() > 2 && w.back() == 'e' && std::isalpha(static_cast<unsigned char>(w[w.size() - 2])) != 0 &&
      std::string("aeiou").find(w[w.size() - 2]) == std::string::npos) {
    w.pop_back();
  }

  std::vector<std::string> out;
  for (std::size_t i = 0; i < w.size();) {
    const char c = w[i];
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      auto p = bundled_lex.pronounce(digit_words[static_cast<std::size_t>(c - '0')]);
      out.insert(out.end(), p.begin(), p.end());
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& [pat, phones] : digraphs) {
      if (w.compare(i, pat.size(), pat) == 0) {
        out.insert(out.end(), phones.begin(), phones.end());
        i += pat.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (c == 'y') {
      out.emplace_back(i == 0 ? "Y" : "IY");
    } else if (i > 0 && c == w[i - 1] && std::string("aeiou").find(c) == std::string::npos) {
      // doubled consonant
    } else {
      const auto& p = letters.at(c);
      out.insert(out.end(), p.begin(), p.end());
    }
    ++i;
  }
  return out;
}

std::vector<std::string> grapheme_to_phoneme(std::string_view text, const Lexicon& lexicon) {
  std::vector<std::string> out;
  bool first = true;
  for (const std::string& word : split_ws(text)) {
    auto phones = lexicon.pronounce(word);
    if (phones.empty()) continue;
    if (!first) out.emplace_back(PhonemeInventory::kSeparator);
    out.insert(out.end(), phones.begin(), phones.end());
    first = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// BPE

std::vector<std::string> utf8_codepoints(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

// Each segment starts at a space marker (except possibly the first).
std::vector<std::vector<std::string>> segment(std::string_view text) {
  std::vector<std::vector<std::string>> segs;
  for (std::string& cp : utf8_codepoints(text)) {
    const bool space = cp == " ";
    if (space) cp = std::string(BpeModel::kSpaceMarker);
    if (space || segs.empty()) segs.emplace_back();
    segs.back().push_back(std::move(cp));
  }
  return segs;
}

std::string escape_unit(const std::string& u) {
  std::string out;
  for (char ch : u) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case ' ': out += "\\s"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string unescape_unit(const std::string& u) {
  std::string out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] != '\\' || i + 1 == u.size()) {
      out += u[i];
      continue;
    }
    const char n = u[++i];
    switch (n) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 's': out += ' '; break;
      case 'r': out += '\r'; break;
      default: out += n;
    }
  }
  return out;
}

const std::vector<std::string>& special_units() {
  static const std::vector<std::string> s = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return s;
}

}  // namespace

BpeModel BpeModel::train(const std::vector<std::string>& corpus, int vocab_size) {
  if (corpus.empty()) throw BpeError("empty corpus");

  std::map<std::vector<std::string>, long> words;
  std::set<std::string> alphabet;
  for (const auto& line : corpus) {
    for (auto& seg : segment(line)) {
      alphabet.insert(seg.begin(), seg.end());
      ++words[seg];
    }
  }
  const int base = kNumSpecial + static_cast<int>(alphabet.size());
  if (vocab_size <= base) {
    throw BpeError("vocab_size too small: " + std::to_string(vocab_size) + " <= base alphabet " +
                   std::to_string(base));
  }

  BpeModel model;
  model.units_ = special_units();
  model.units_.insert(model.units_.end(), alphabet.begin(), alphabet.end());

  std::vector<std::pair<std::vector<std::string>, long>> work(words.begin(), words.end());
  while (model.vocab_size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [units, n] : work) {
      for (std::size_t i = 0; i + 1 < units.size(); ++i) counts[{units[i], units[i + 1]}] += n;
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long best_n = 1;
    std::string best_joined;
    for (const auto& [pair, n] : counts) {
      std::string joined = pair.first + pair.second;
      if (n > best_n || (n == best_n && best != nullptr && joined < best_joined)) {
        best = &pair;
        best_n = n;
        best_joined = std::move(joined);
      }
    }
    if (best == nullptr) break;  // no pair occurs at least twice
    const auto merge = *best;
    for (auto& [units, n] : work) {
      std::vector<std::string> next;
      next.reserve(units.size());
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (i + 1 < units.size() && units[i] == merge.first && units[i + 1] == merge.second) {
          next.push_back(best_joined);
          ++i;
        } else {
          next.push_back(units[i]);
        }
      }
      units = std::move(next);
    }
    model.merges_.push_back(merge);
    if (std::find(model.units_.begin(), model.units_.end(), best_joined) == model.units_.end()) {
      model.units_.push_back(best_joined);
    }
  }
  model.rebuild_index();
  return model;
}

void BpeModel::rebuild_index() {
  unit_ids_.clear();
  merge_rank_.clear();
  for (std::size_t i = 0; i < units_.size(); ++i) unit_ids_.emplace(units_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < merges_.size(); ++i) merge_rank_.emplace(merges_[i], static_cast<int>(i));
}

std::vector<std::string> BpeModel::apply_merges(std::vector<std::string> units) const {
  while (units.size() > 1) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < units.size(); ++i) {
      auto it = merge_rank_.find({units[i], units[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    const auto& [left, right] = merges_[static_cast<std::size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (i >= best_pos && i + 1 < units.size() && units[i] == left && units[i + 1] == right) {
        next.push_back(left + right);
        ++i;
      } else {
        next.push_back(std::move(units[i]));
      }
    }
    units = std::move(next);
  }
  return units;
}

std::vector<int> BpeModel::encode(std::string_view text) const {
  std::vector<int> ids;
  for (auto& seg : segment(text)) {
    for (const auto& u : apply_merges(std::move(seg))) {
      auto it = unit_ids_.find(u);
      if (it != unit_ids_.end() && it->second >= kNumSpecial) {
        ids.push_back(it->second);
      } else if (it == unit_ids_.end() && utf8_codepoints(u).size() > 1) {
        // Merged unit absent from the vocab cannot happen for a consistent model.
        throw BpeError("inconsistent model: merged unit not in vocab");
      } else {
        ids.push_back(kUnk);
      }
    }
  }
  return ids;
}

std::string BpeModel::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab_size()) throw BpeError("unknown id on decode: " + std::to_string(id));
    if (id == kUnk) {
      out += "\xE2\x81\x87";
    } else if (id >= kNumSpecial) {
      out += units_[static_cast<std::size_t>(id)];
    }
  }
  return replace_all(std::move(out), kSpaceMarker, " ");
}

const std::string& BpeModel::unit(int id) const {
  if (id < 0 || id >= vocab_size()) throw BpeError("unknown id: " + std::to_string(id));
  return units_[static_cast<std::size_t>(id)];
}

std::optional<int> BpeModel::id_of(const std::string& unit) const {
  auto it = unit_ids_.find(unit);
  if (it == unit_ids_.end()) return std::nullopt;
  return it->second;
}

std::string BpeModel::merges_text() const {
  std::string out = "#version: b2t-bpe 1\n";
  for (const auto& [l, r] : merges_) out += escape_unit(l) + ' ' + escape_unit(r) + '\n';
  return out;
}

std::string BpeModel::vocab_text() const {
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < units_.size(); ++i) vocab[units_[i]] = i;
  return vocab.dump(1) + '\n';
}

void BpeModel::save(const std::filesystem::path& merges_file, const std::filesystem::path& vocab_file) const {
  io::write_file_atomic(merges_file, merges_text());
  io::write_file_atomic(vocab_file, vocab_text());
}

BpeModel BpeModel::from_text(std::string_view merges, std::string_view vocab_json) {
  BpeModel model;
  nlohmann::json vocab;
  try {
    vocab = nlohmann::json::parse(vocab_json);
  } catch (const nlohmann::json::exception& e) {
    throw BpeError(std::string("malformed vocab: ") + e.what());
  }
  model.units_.assign(vocab.size(), {});
  std::vector<bool> seen(vocab.size(), false);
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    const auto id = it.value().get<std::size_t>();
    if (id >= vocab.size() || seen[id]) throw BpeError("vocab ids are not a permutation of 0..n-1");
    seen[id] = true;
    model.units_[id] = it.key();
  }
  if (model.units_.size() < static_cast<std::size_t>(kNumSpecial)) throw BpeError("vocab is missing special units");
  for (int i = 0; i < kNumSpecial; ++i) {
    if (model.units_[static_cast<std::size_t>(i)] != special_units()[static_cast<std::size_t>(i)]) {
      throw BpeError("vocab is missing special unit " + special_units()[static_cast<std::size_t>(i)]);
    }
  }
  std::istringstream min{std::string(merges)};
  std::string line;
  while (std::getline(min, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw BpeError("malformed merge line: " + line);
    model.merges_.emplace_back(unescape_unit(line.substr(0, sp)), unescape_unit(line.substr(sp + 1)));
  }
  model.rebuild_index();
  for (const auto& [l, r] : model.merges_) {
    if (!model.id_of(l + r)) throw BpeError("merge result not in vocab: " + l + r);
  }
  return model;
}

BpeModel BpeModel::load(const std::filesystem::path& merges_file, const std::filesystem::path& vocab_file) {
  if (!std::filesystem::exists(vocab_file)) throw BpeError("cannot open " + vocab_file.string());
  if (!std::filesystem::exists(merges_file)) throw BpeError("cannot open " + merges_file.string());
  return from_text(io::read_file(merges_file), io::read_file(vocab_file));
}

// ---------------------------------------------------------------------------

LabelMode parse_label_mode(std::string_view s) {
  if (s == "phoneme") return LabelMode::phoneme;
  if (s == "bpe") return LabelMode::bpe;
  throw std::invalid_argument("label mode must be 'phoneme' or 'bpe', got '" + std::string(s) + "'");
}

std::string_view to_string(LabelMode mode) { return mode == LabelMode::phoneme ? "phoneme" : "bpe"; }

int CtcLabeler::num_classes() const {
  if (mode == LabelMode::phoneme) return inventory.num_classes();
  if (!bpe) throw std::logic_error("bpe label mode without a model");
  return bpe->vocab_size() - BpeModel::kNumSpecial + 1;
}

LabelSequence CtcLabeler::build(std::string_view transcription) const {
  const auto words = normalize_for_eval(transcription);
  std::string joined;
  for (const auto& w : words) {
    if (!joined.empty()) joined += ' ';
    joined += w;
  }
  LabelSequence out;
  if (mode == LabelMode::phoneme) {
    for (const auto& p : grapheme_to_phoneme(joined, lexicon)) out.push_back(inventory.id_of(p));
  } else {
    if (!bpe) throw std::logic_error("bpe label mode without a model");
    for (int id : bpe->encode(joined)) {
      if (id >= BpeModel::kNumSpecial) out.push_back(id - BpeModel::kNumSpecial + 1);
    }
  }
  if (out.empty()) throw std::invalid_argument("empty target");
  return out;
}

std::vector<std::string> CtcLabeler::symbols(const LabelSequence& labels) const {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (int id : labels) {
    if (mode == LabelMode::phoneme) {
      out.push_back(inventory.symbol_of(id));
    } else {
      out.push_back(bpe->unit(id - 1 + BpeModel::kNumSpecial));
    }
  }
  return out;
}

}  // namespace b2t
