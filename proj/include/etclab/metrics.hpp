#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etclab/errors.hpp"

namespace etclab {

// Tag ids are indices into a name table like {"O","B-brand","I-brand",...}.
// The scheme splits each name into its BIO kind and entity type once so the
// per-sentence scan never touches strings.
struct TagScheme {
  enum Kind { kOutside = 0, kBegin = 1, kInside = 2 };
  std::vector<int> kind;  // per tag id
  std::vector<int> type;  // entity type index; -1 for O
  std::vector<std::string> names;

  int size() const { return static_cast<int>(kind.size()); }
  static TagScheme from_names(const std::vector<std::string>& names);
};

// Exact-match span: [start, end) token range carrying one entity type.
struct Span {
  int start = 0;
  int end = 0;
  int type = 0;
  bool operator==(const Span& o) const = default;
};

// Maximal B..I runs. A stray I (no live span of the same type directly
// before it) opens a new span as if it were B; `repaired` counts such tags.
std::vector<Span> extract_spans(const std::vector<int>& tags, const TagScheme& scheme,
                                long long* repaired = nullptr);

struct F1Result {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long long matched = 0;
  long long pred_spans = 0;
  long long gold_spans = 0;
  long long repaired = 0;
};

// Micro-averaged span F1 over a set of sentences. Both sides span-free
// scores 1; spans on exactly one side score 0.
F1Result span_f1(const std::vector<std::vector<int>>& pred,
                 const std::vector<std::vector<int>>& gold, const TagScheme& scheme);

// F1 of label 1. An evaluation with no positives on either side counts as
// error-free and scores 1.
double binary_f1(const std::vector<int>& pred, const std::vector<int>& gold);

// Fraction of sequences predicted exactly, token for token.
double exact_match_accuracy(const std::vector<std::vector<std::int32_t>>& pred,
                            const std::vector<std::vector<std::int32_t>>& gold);

}  // namespace etclab
