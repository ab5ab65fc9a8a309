#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etclab/errors.hpp"
#include "etclab/tokenizer.hpp"

namespace etclab {

enum class Task { ner, binary_cls, spell };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

// One fine-tuning example. `text` is the raw query; `x` is its encoding
// under the dataset's vocabulary. Only the field for the dataset's task is
// meaningful: `tags` (per token, ner), `label` (binary_cls), or `target`
// (spell, same length as x).
struct LabeledExample {
  std::string text;
  TokenSequence x;
  std::vector<int> tags;
  int label = 0;
  TokenSequence target;
  std::string target_text;
};

struct LabeledDataset {
  Task task = Task::ner;
  std::vector<std::string> tag_names;  // ner only; index = tag id
  std::uint64_t vocab_hash = 0;
  std::vector<LabeledExample> train, dev, test;
};

// Unlabeled corpus: one query per line, blank lines skipped.
void save_corpus(const std::string& path, const std::vector<std::string>& queries);
std::vector<std::string> load_corpus_text(const std::string& path);
std::vector<TokenSequence> encode_corpus(const std::vector<std::string>& queries,
                                         const Vocabulary& vocab, int max_len);

// Labeled split file: header lines `# task=`, `# vocab_hash=`, `# tags=`
// (ner only), then one `query TAB label-string` record per line. The label
// string holds space-separated BIO tags (aligned with the encoded query),
// a class id, or the corrected query.
void save_labeled_split(const std::string& path, const LabeledDataset& ds,
                        const std::vector<LabeledExample>& split);

// Loads one split and re-encodes it under `vocab`. The header hash must
// match the vocabulary; ner tags must align one-to-one with tokens and form
// valid BIO transitions; spell targets must encode to the source length.
struct LoadedSplit {
  Task task;
  std::vector<std::string> tag_names;
  std::vector<LabeledExample> examples;
};
LoadedSplit load_labeled_split(const std::string& path, const Vocabulary& vocab, int max_len);

// Convenience over the three conventional split files `<prefix>.train.tsv`,
// `<prefix>.dev.tsv`, `<prefix>.test.tsv`.
void save_labeled_dataset(const std::string& prefix, const LabeledDataset& ds);
LabeledDataset load_labeled_dataset(const std::string& prefix, const Vocabulary& vocab,
                                    int max_len);

}  // namespace etclab
