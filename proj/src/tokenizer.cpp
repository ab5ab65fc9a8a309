#include "etclab/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "etclab/errors.hpp"
#include "etclab/hash.hpp"

namespace etclab {
namespace {

constexpr std::uint32_t kInvalidCp = 0xFFFFFFFF;

// Decodes one codepoint starting at i, advancing i. Invalid sequences yield
// kInvalidCp and advance by one byte so the scan always terminates.
std::uint32_t next_codepoint(const std::string& s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int extra;
  std::uint32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return kInvalidCp;
  }
  if (i + static_cast<std::size_t>(extra) >= s.size()) {
    ++i;
    return kInvalidCp;
  }
  std::uint32_t out = cp;
  for (int k = 1; k <= extra; ++k) {
    const unsigned char b = byte(i + static_cast<std::size_t>(k));
    if ((b & 0xC0) != 0x80) {
      ++i;
      return kInvalidCp;
    }
    out = (out << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  // reject overlong encodings and surrogates
  if ((extra == 1 && out < 0x80) || (extra == 2 && out < 0x800) ||
      (extra == 3 && out < 0x10000) || (out >= 0xD800 && out <= 0xDFFF) || out > 0x10FFFF)
    return kInvalidCp;
  return out;
}

void append_utf8(std::string& s, std::uint32_t cp) {
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

struct FoldRange {
  std::uint32_t lo, hi;
  const char* base;
};

// Accent folding for the Latin-1 supplement and Latin Extended-A blocks.
// Each range maps to an ASCII base; multi-letter expansions spell ligatures.
const FoldRange kFolds[] = {
    {0x00C0, 0x00C5, "a"}, {0x00C6, 0x00C6, "ae"}, {0x00C7, 0x00C7, "c"},
    {0x00C8, 0x00CB, "e"}, {0x00CC, 0x00CF, "i"},  {0x00D0, 0x00D0, "d"},
    {0x00D1, 0x00D1, "n"}, {0x00D2, 0x00D6, "o"},  {0x00D8, 0x00D8, "o"},
    {0x00D9, 0x00DC, "u"}, {0x00DD, 0x00DD, "y"},  {0x00DE, 0x00DE, "th"},
    {0x00DF, 0x00DF, "ss"}, {0x00E0, 0x00E5, "a"}, {0x00E6, 0x00E6, "ae"},
    {0x00E7, 0x00E7, "c"}, {0x00E8, 0x00EB, "e"},  {0x00EC, 0x00EF, "i"},
    {0x00F0, 0x00F0, "d"}, {0x00F1, 0x00F1, "n"},  {0x00F2, 0x00F6, "o"},
    {0x00F8, 0x00F8, "o"}, {0x00F9, 0x00FC, "u"},  {0x00FD, 0x00FD, "y"},
    {0x00FE, 0x00FE, "th"}, {0x00FF, 0x00FF, "y"}, {0x0100, 0x0105, "a"},
    {0x0106, 0x010D, "c"}, {0x010E, 0x0111, "d"},  {0x0112, 0x011B, "e"},
    {0x011C, 0x0123, "g"}, {0x0124, 0x0127, "h"},  {0x0128, 0x0131, "i"},
    {0x0132, 0x0133, "ij"}, {0x0134, 0x0135, "j"}, {0x0136, 0x0138, "k"},
    {0x0139, 0x0142, "l"}, {0x0143, 0x014B, "n"},  {0x014C, 0x0151, "o"},
    {0x0152, 0x0153, "oe"}, {0x0154, 0x0159, "r"}, {0x015A, 0x0161, "s"},
    {0x0162, 0x0167, "t"}, {0x0168, 0x0173, "u"},  {0x0174, 0x0175, "w"},
    {0x0176, 0x0178, "y"}, {0x0179, 0x017E, "z"},  {0x017F, 0x017F, "s"},
};

const char* fold_latin(std::uint32_t cp) {
  for (const FoldRange& r : kFolds)
    if (cp >= r.lo && cp <= r.hi) return r.base;
  return nullptr;
}

bool is_space_cp(std::uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x3000;
}

std::vector<std::string> split_words(const std::string& normalized) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < normalized.size()) {
    const std::size_t sp = normalized.find(' ', start);
    if (sp == std::string::npos) {
      words.push_back(normalized.substr(start));
      break;
    }
    if (sp > start) words.push_back(normalized.substr(start, sp - start));
    start = sp + 1;
  }
  return words;
}

// One UTF-8 string per codepoint.
std::vector<std::string> codepoints_of(const std::string& word) {
  std::vector<std::string> cps;
  std::size_t i = 0;
  while (i < word.size()) {
    const std::size_t begin = i;
    next_codepoint(word, i);
    cps.push_back(word.substr(begin, i - begin));
  }
  return cps;
}

const std::array<std::string, 4> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[MASK]"};

void validate_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kSpecials.size()) throw DataError("invalid vocabulary: missing specials");
  for (std::size_t i = 0; i < kSpecials.size(); ++i)
    if (tokens[i] != kSpecials[i])
      throw DataError("invalid vocabulary: special token order, expected " + kSpecials[i] +
                      " at id " + std::to_string(i));
  std::unordered_set<std::string> seen;
  for (const std::string& t : tokens) {
    if (t.empty()) throw DataError("invalid vocabulary: empty token");
    if (!seen.insert(t).second) throw DataError("invalid vocabulary: duplicate token " + t);
  }
}

}  // namespace

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("invalid id " + std::to_string(id));
  return tokens[static_cast<std::size_t>(id)];
}

int Vocabulary::id_of(const std::string& piece) const {
  const auto it = std::find(tokens.begin(), tokens.end(), piece);
  return it == tokens.end() ? -1 : static_cast<int>(it - tokens.begin());
}

std::uint64_t Vocabulary::hash() const {
  std::string joined;
  for (const std::string& t : tokens) {
    joined += t;
    joined += '\n';
  }
  return sha256_u64(joined);
}

std::string normalize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::uint32_t cp = next_codepoint(text, i);
    if (cp == kInvalidCp) continue;
    if (is_space_cp(cp)) {
      pending_space = true;
      continue;
    }
    if (cp >= 0x0300 && cp <= 0x036F) continue;  // combining marks
    std::string piece;
    if (cp < 0x80) {
      piece.push_back(cp >= 'A' && cp <= 'Z' ? static_cast<char>(cp + 32)
                                             : static_cast<char>(cp));
    } else if (const char* base = fold_latin(cp)) {
      piece = base;
    } else if (cp >= 0x0410 && cp <= 0x042F) {  // cyrillic capitals
      append_utf8(piece, cp + 0x20);
    } else if (cp >= 0x0400 && cp <= 0x040F) {
      append_utf8(piece, cp + 0x50);
    } else if (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2) {  // greek capitals
      append_utf8(piece, cp + 0x20);
    } else {
      append_utf8(piece, cp);
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out += piece;
  }
  return out;
}

Vocabulary train_vocab(const std::vector<std::string>& corpus, int target_size,
                       int min_frequency) {
  if (min_frequency < 1) min_frequency = 1;
  std::unordered_map<std::string, long long> word_freq;
  for (const std::string& line : corpus)
    for (const std::string& w : split_words(normalize(line))) ++word_freq[w];
  if (word_freq.empty()) throw DataError("empty corpus");

  // alphabet above the frequency floor, in bare and continuation form
  std::map<std::string, long long> char_freq;
  for (const auto& [word, freq] : word_freq)
    for (const std::string& c : codepoints_of(word)) char_freq[c] += freq;
  std::vector<std::string> bare, cont;
  for (const auto& [c, freq] : char_freq)
    if (freq >= min_frequency) {
      bare.push_back(c);
      cont.push_back(std::string(Vocabulary::kContinuation) + c);
    }
  if (bare.empty()) throw DataError("empty corpus");
  const int floor_units =
      static_cast<int>(kSpecials.size()) + static_cast<int>(bare.size() + cont.size());
  if (target_size < floor_units)
    throw DataError("target size " + std::to_string(target_size) +
                    " too small for alphabet of " + std::to_string(floor_units) + " units");

  std::unordered_set<std::string> in_vocab;
  for (const std::string& t : kSpecials) in_vocab.insert(t);
  for (const std::string& t : bare) in_vocab.insert(t);
  for (const std::string& t : cont) in_vocab.insert(t);

  // words as symbol sequences; words with sub-floor characters are dropped
  // (they cannot be segmented by the final vocabulary anyway)
  std::vector<std::pair<std::vector<std::string>, long long>> seqs;
  for (const auto& [word, freq] : word_freq) {
    std::vector<std::string> syms;
    bool ok = true;
    bool first = true;
    for (const std::string& c : codepoints_of(word)) {
      const std::string sym = first ? c : std::string(Vocabulary::kContinuation) + c;
      if (!in_vocab.count(sym)) {
        ok = false;
        break;
      }
      syms.push_back(sym);
      first = false;
    }
    if (ok && !syms.empty()) seqs.emplace_back(std::move(syms), freq);
  }
  // map iteration order must not leak into merge selection
  std::sort(seqs.begin(), seqs.end());

  std::vector<std::string> merges;
  int units = static_cast<int>(in_vocab.size());
  while (units < target_size) {
    std::map<std::pair<std::string, std::string>, long long> pair_freq;
    for (const auto& [syms, freq] : seqs)
      for (std::size_t k = 0; k + 1 < syms.size(); ++k)
        pair_freq[{syms[k], syms[k + 1]}] += freq;
    if (pair_freq.empty()) break;
    auto best = pair_freq.begin();
    for (auto it = std::next(pair_freq.begin()); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;  // ties keep the map-order (lexicographic) first
    if (best->second < min_frequency) break;
    const auto [left, right] = best->first;
    const bool right_cont = right.rfind(Vocabulary::kContinuation, 0) == 0;
    const std::string merged = left + right.substr(right_cont ? 2 : 0);
    for (auto& [syms, freq] : seqs) {
      for (std::size_t k = 0; k + 1 < syms.size();) {
        if (syms[k] == left && syms[k + 1] == right) {
          syms[k] = merged;
          syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(k) + 1);
        } else {
          ++k;
        }
      }
    }
    if (in_vocab.insert(merged).second) {
      merges.push_back(merged);
      ++units;
    }
  }

  Vocabulary v;
  v.tokens.assign(kSpecials.begin(), kSpecials.end());
  v.tokens.insert(v.tokens.end(), bare.begin(), bare.end());
  v.tokens.insert(v.tokens.end(), cont.begin(), cont.end());
  v.tokens.insert(v.tokens.end(), merges.begin(), merges.end());
  validate_tokens(v.tokens);
  return v;
}

TokenSequence encode(const std::string& text, const Vocabulary& v) {
  // match set excludes specials so encode can never emit them
  std::unordered_map<std::string, std::int32_t> index;
  std::size_t max_len = 1;
  for (int id = static_cast<int>(kSpecials.size()); id < v.size(); ++id) {
    const std::string& t = v.tokens[static_cast<std::size_t>(id)];
    index.emplace(t, id);
    max_len = std::max(max_len, t.size());
  }

  TokenSequence seq;
  for (const std::string& word : split_words(normalize(text))) {
    const std::vector<std::string> cps = codepoints_of(word);
    std::vector<std::int32_t> pieces;
    std::size_t i = 0;
    bool failed = false;
    while (i < cps.size()) {
      int found = -1;
      std::size_t found_end = i;
      std::string candidate = i > 0 ? Vocabulary::kContinuation : "";
      for (std::size_t j = i; j < cps.size(); ++j) {
        candidate += cps[j];
        if (candidate.size() > max_len) break;
        const auto it = index.find(candidate);
        if (it != index.end()) {
          found = it->second;
          found_end = j + 1;
        }
      }
      if (found < 0) {
        failed = true;
        break;
      }
      pieces.push_back(found);
      i = found_end;
    }
    if (failed)
      seq.ids.push_back(Vocabulary::kUnkId);
    else
      seq.ids.insert(seq.ids.end(), pieces.begin(), pieces.end());
  }
  return seq;
}

std::string decode(const TokenSequence& seq, const Vocabulary& v) {
  std::string out;
  for (const std::int32_t id : seq.ids) {
    const std::string& t = v.token(id);  // throws on out-of-range ids
    if (t.rfind(Vocabulary::kContinuation, 0) == 0) {
      out += t.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += t;
    }
  }
  return out;
}

void save_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write vocabulary file " + path);
  for (const std::string& t : v.tokens) f << t << '\n';
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read vocabulary file " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) v.tokens.push_back(line);
  validate_tokens(v.tokens);
  return v;
}

}  // namespace etclab
