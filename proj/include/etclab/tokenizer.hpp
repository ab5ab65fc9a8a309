#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace etclab {

// Subword vocabulary. Ids are dense over [0, size()); the four special
// tokens always occupy the first four ids in the order below.
struct Vocabulary {
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kClsId = 2;
  static constexpr int kMaskId = 3;
  static constexpr const char* kContinuation = "##";

  std::vector<std::string> tokens;

  int size() const { return static_cast<int>(tokens.size()); }
  const std::string& token(int id) const;
  // -1 when the string is not a token
  int id_of(const std::string& piece) const;

  // Fingerprint over the full id -> string mapping. Stored in checkpoints
  // and labeled datasets to catch mixing artifacts across vocabularies.
  std::uint64_t hash() const;
};

struct TokenSequence {
  std::vector<std::int32_t> ids;
  int n() const { return static_cast<int>(ids.size()); }
};

// Lowercases, folds accented latin letters to their ASCII base, drops
// combining marks, and collapses whitespace runs. Idempotent; invalid UTF-8
// bytes are dropped.
std::string normalize(const std::string& text);

// Builds a vocabulary from one query per element: characters above the
// frequency floor seed the alphabet, then highest-frequency adjacent pairs
// are merged until target_size is reached or no pair clears the floor.
// Equal-frequency candidates are ordered lexicographically.
Vocabulary train_vocab(const std::vector<std::string>& corpus, int target_size,
                       int min_frequency = 2);

// Greedy longest-match segmentation of normalize(text). A word with any
// unmatchable span becomes a single unk token. Never emits pad/cls/mask.
TokenSequence encode(const std::string& text, const Vocabulary& v);

// Inverse of encode up to unknown-token substitution; continuation pieces
// are joined to the preceding piece.
std::string decode(const TokenSequence& seq, const Vocabulary& v);

void save_vocab(const Vocabulary& v, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace etclab
