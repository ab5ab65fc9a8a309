#include "etclab/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace etclab {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join_ws(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// I-x may only follow B-x or I-x of the same entity type.
void check_bio(const std::vector<int>& tags, const std::vector<std::string>& names,
               const std::string& where) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& name = names[static_cast<std::size_t>(tags[i])];
    if (name[0] != 'I') continue;
    const bool ok = i > 0 && names[static_cast<std::size_t>(tags[i - 1])].size() > 2 &&
                    names[static_cast<std::size_t>(tags[i - 1])][0] != 'O' &&
                    names[static_cast<std::size_t>(tags[i - 1])].substr(2) == name.substr(2);
    if (!ok) throw DataError("invalid BIO transition in " + where);
  }
}

}  // namespace

const char* task_name(Task t) {
  switch (t) {
    case Task::ner: return "ner";
    case Task::binary_cls: return "binary_cls";
    case Task::spell: return "spell";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  if (name == "ner") return Task::ner;
  if (name == "binary_cls") return Task::binary_cls;
  if (name == "spell") return Task::spell;
  throw DataError("unknown task: " + name);
}

void save_corpus(const std::string& path, const std::vector<std::string>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& q : queries) out << q << '\n';
}

std::vector<std::string> load_corpus_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<TokenSequence> encode_corpus(const std::vector<std::string>& queries,
                                         const Vocabulary& vocab, int max_len) {
  std::vector<TokenSequence> out;
  out.reserve(queries.size());
  for (const std::string& q : queries) {
    TokenSequence s = encode(q, vocab);
    if (s.n() > max_len) s.ids.resize(static_cast<std::size_t>(max_len));
    if (s.n() > 0) out.push_back(std::move(s));
  }
  return out;
}

void save_labeled_split(const std::string& path, const LabeledDataset& ds,
                        const std::vector<LabeledExample>& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(ds.vocab_hash));
  out << "# task=" << task_name(ds.task) << '\n';
  out << "# vocab_hash=" << hash << '\n';
  if (ds.task == Task::ner) out << "# tags=" << join_ws(ds.tag_names) << '\n';
  for (const LabeledExample& ex : split) {
    out << ex.text << '\t';
    switch (ds.task) {
      case Task::ner: {
        std::vector<std::string> names;
        for (const int t : ex.tags) names.push_back(ds.tag_names[static_cast<std::size_t>(t)]);
        out << join_ws(names);
        break;
      }
      case Task::binary_cls:
        out << ex.label;
        break;
      case Task::spell:
        out << ex.target_text;
        break;
    }
    out << '\n';
  }
}

LoadedSplit load_labeled_split(const std::string& path, const Vocabulary& vocab, int max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  LoadedSplit split;
  bool have_task = false;
  std::uint64_t file_hash = 0;
  bool have_hash = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq), val = body.substr(eq + 1);
      if (key == "task") {
        split.task = task_from_name(val);
        have_task = true;
      } else if (key == "vocab_hash") {
        file_hash = std::stoull(val, nullptr, 16);
        have_hash = true;
      } else if (key == "tags") {
        split.tag_names = split_ws(val);
      }
      continue;
    }
    if (!have_task) throw DataError(path + ": missing task header");
    if (!have_hash || file_hash != vocab.hash()) throw DataError("vocabulary mismatch");

    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": missing label field");
    LabeledExample ex;
    ex.text = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    ex.x = encode(ex.text, vocab);
    if (ex.x.n() == 0)
      throw DataError(path + ":" + std::to_string(line_no) + ": query encodes to nothing");
    if (ex.x.n() > max_len)
      throw DataError(path + ":" + std::to_string(line_no) + ": query exceeds max_len " +
                      std::to_string(max_len));

    switch (split.task) {
      case Task::ner: {
        if (split.tag_names.empty()) throw DataError(path + ": missing tags header");
        for (const std::string& name : split_ws(label)) {
          int id = -1;
          for (std::size_t i = 0; i < split.tag_names.size(); ++i)
            if (split.tag_names[i] == name) id = static_cast<int>(i);
          if (id < 0)
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown tag " + name);
          ex.tags.push_back(id);
        }
        if (static_cast<int>(ex.tags.size()) != ex.x.n())
          throw DataError(path + ":" + std::to_string(line_no) + ": tag count " +
                          std::to_string(ex.tags.size()) + " does not match token count " +
                          std::to_string(ex.x.n()));
        check_bio(ex.tags, split.tag_names, path + ":" + std::to_string(line_no));
        break;
      }
      case Task::binary_cls: {
        if (label != "0" && label != "1")
          throw DataError(path + ":" + std::to_string(line_no) + ": label must be 0 or 1");
        ex.label = label == "1" ? 1 : 0;
        break;
      }
      case Task::spell: {
        ex.target_text = label;
        ex.target = encode(label, vocab);
        if (ex.target.n() != ex.x.n())
          throw DataError(path + ":" + std::to_string(line_no) +
                          ": corrected query length differs from source");
        break;
      }
    }
    split.examples.push_back(std::move(ex));
  }
  if (!have_task) throw DataError(path + ": missing task header");
  return split;
}

void save_labeled_dataset(const std::string& prefix, const LabeledDataset& ds) {
  save_labeled_split(prefix + ".train.tsv", ds, ds.train);
  save_labeled_split(prefix + ".dev.tsv", ds, ds.dev);
  save_labeled_split(prefix + ".test.tsv", ds, ds.test);
}

LabeledDataset load_labeled_dataset(const std::string& prefix, const Vocabulary& vocab,
                                    int max_len) {
  LabeledDataset ds;
  LoadedSplit train = load_labeled_split(prefix + ".train.tsv", vocab, max_len);
  LoadedSplit dev = load_labeled_split(prefix + ".dev.tsv", vocab, max_len);
  LoadedSplit test = load_labeled_split(prefix + ".test.tsv", vocab, max_len);
  if (dev.task != train.task || test.task != train.task)
    throw DataError(prefix + ": splits disagree on task");
  if (dev.tag_names != train.tag_names || test.tag_names != train.tag_names)
    throw DataError(prefix + ": splits disagree on tag set");
  ds.task = train.task;
  ds.tag_names = train.tag_names;
  ds.vocab_hash = vocab.hash();
  ds.train = std::move(train.examples);
  ds.dev = std::move(dev.examples);
  ds.test = std::move(test.examples);
  return ds;
}

}  // namespace etclab
