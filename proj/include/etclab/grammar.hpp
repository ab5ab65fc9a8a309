#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "etclab/dataset.hpp"
#include "etclab/rng.hpp"
#include "etclab/tokenizer.hpp"

namespace etclab {

// Weighted production: each slot names a lexicon; one uniform word draw per
// slot.
struct Pattern {
  std::vector<std::string> slots;
  double weight = 1.0;
};

// Declarative query grammar. Lexicons keep declaration order so corpora are
// reproducible; roles map a lexicon to its entity type ("O" for none).
struct QueryGrammar {
  std::vector<std::pair<std::string, std::vector<std::string>>> lexicons;
  std::map<std::string, std::string> roles;
  std::vector<Pattern> patterns;

  const std::vector<std::string>* find_lexicon(const std::string& name) const;
  std::string role_of(const std::string& lexicon) const;

  // Rejects empty or unresolvable pieces, non-normalized words, overlap
  // between the brand and product lexicons, and non-positive weights.
  void validate() const;

  // Tag name table in a fixed order: O first, then B-/I- per entity type in
  // lexicon declaration order.
  std::vector<std::string> tag_names() const;
};

QueryGrammar parse_grammar(const std::string& text);
QueryGrammar load_grammar(const std::string& path);

struct GeneratedQuery {
  std::vector<std::string> words;
  std::vector<std::string> slots;  // lexicon name per word
};

GeneratedQuery sample_query(const QueryGrammar& g, Rng& rng);

// `count` whitespace-joined queries, pure in (grammar, seed, count).
std::vector<std::string> generate_corpus(const QueryGrammar& g, long long count,
                                         std::uint64_t seed);

// Probability that a sampled query contains a word from `lexicon`, computed
// from pattern weights. Requires that lexicon to be disjoint from all
// others, otherwise shared words would leak in through other slots.
double marker_positive_rate(const QueryGrammar& g, const std::string& lexicon);

struct LabeledGenOptions {
  int train = 0;
  int dev = 0;
  int test = 0;
  std::uint64_t seed = 0;
  std::string marker = "media";  // positive lexicon for binary_cls
  double edit_rate = 0.3;        // per-word corruption probability for spell
};

// Labeled data straight from grammar ground truth. NER tags align with the
// subword encoding (B- on a word's first piece, I- on the rest); binary
// labels flag queries containing a marker word; spell pairs corrupt single
// characters only when the corrupted word keeps its subword count.
LabeledDataset generate_labeled(const QueryGrammar& g, Task task, const Vocabulary& vocab,
                                const LabeledGenOptions& opt);

}  // namespace etclab
