#include "etclab/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <set>
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

}  // namespace

const std::vector<std::string>* QueryGrammar::find_lexicon(const std::string& name) const {
  for (const auto& [n, words] : lexicons)
    if (n == name) return &words;
  return nullptr;
}

std::string QueryGrammar::role_of(const std::string& lexicon) const {
  const auto it = roles.find(lexicon);
  return it == roles.end() ? std::string("O") : it->second;
}

void QueryGrammar::validate() const {
  if (lexicons.empty()) throw DataError("grammar has no lexicons");
  if (patterns.empty()) throw DataError("grammar has no patterns");
  for (const auto& [name, words] : lexicons) {
    if (words.empty()) throw DataError("empty lexicon: " + name);
    for (const std::string& w : words)
      if (w != normalize(w)) throw DataError("lexicon word not normalized: " + w);
  }
  for (const Pattern& p : patterns) {
    if (!(p.weight > 0)) throw DataError("pattern weight must be positive");
    if (p.slots.empty()) throw DataError("empty pattern");
    for (const std::string& slot : p.slots)
      if (!find_lexicon(slot)) throw DataError("pattern references unknown lexicon: " + slot);
  }
  const auto* brand = find_lexicon("brand");
  const auto* product = find_lexicon("product");
  if (brand && product) {
    const std::set<std::string> b(brand->begin(), brand->end());
    for (const std::string& w : *product)
      if (b.count(w)) throw DataError("brand and product lexicons share word: " + w);
  }
}

std::vector<std::string> QueryGrammar::tag_names() const {
  std::vector<std::string> names = {"O"};
  std::set<std::string> seen;
  for (const auto& [lex, words] : lexicons) {
    const std::string role = role_of(lex);
    if (role == "O" || seen.count(role)) continue;
    seen.insert(role);
    names.push_back("B-" + role);
    names.push_back("I-" + role);
  }
  return names;
}

QueryGrammar parse_grammar(const std::string& text) {
  QueryGrammar g;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw DataError("grammar line " + std::to_string(line_no) + ": expected key = value");
    const auto key = split_ws(line.substr(0, eq));
    const auto val = split_ws(line.substr(eq + 1));
    if (key.size() != 2)
      throw DataError("grammar line " + std::to_string(line_no) + ": malformed directive");

    if (key[0] == "lexicon") {
      if (g.find_lexicon(key[1]))
        throw DataError("duplicate lexicon: " + key[1]);
      if (val.empty()) throw DataError("empty lexicon: " + key[1]);
      g.lexicons.emplace_back(key[1], val);
    } else if (key[0] == "role") {
      if (val.size() != 1)
        throw DataError("grammar line " + std::to_string(line_no) + ": role needs one value");
      g.roles[key[1]] = val[0];
    } else if (key[0] == "pattern") {
      Pattern p;
      try {
        p.weight = std::stod(key[1]);
      } catch (const std::exception&) {
        throw DataError("grammar line " + std::to_string(line_no) + ": bad pattern weight");
      }
      p.slots = val;
      g.patterns.push_back(std::move(p));
    } else {
      throw DataError("grammar line " + std::to_string(line_no) + ": unknown directive " +
                      key[0]);
    }
  }
  g.validate();
  return g;
}

QueryGrammar load_grammar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_grammar(buf.str());
}

GeneratedQuery sample_query(const QueryGrammar& g, Rng& rng) {
  double total = 0;
  for (const Pattern& p : g.patterns) total += p.weight;
  const double target = rng.uniform() * total;
  const Pattern* chosen = &g.patterns.back();
  double acc = 0;
  for (const Pattern& p : g.patterns) {
    acc += p.weight;
    if (acc > target) {
      chosen = &p;
      break;
    }
  }
  GeneratedQuery q;
  for (const std::string& slot : chosen->slots) {
    const auto& words = *g.find_lexicon(slot);
    q.words.push_back(words[rng.uniform_int(words.size())]);
    q.slots.push_back(slot);
  }
  return q;
}

std::vector<std::string> generate_corpus(const QueryGrammar& g, long long count,
                                         std::uint64_t seed) {
  if (count < 1) throw DataError("corpus count must be >= 1");
  g.validate();
  Rng rng(derive_seed(seed, "corpus", 0));
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) out.push_back(join_ws(sample_query(g, rng).words));
  return out;
}

double marker_positive_rate(const QueryGrammar& g, const std::string& lexicon) {
  const auto* marker = g.find_lexicon(lexicon);
  if (!marker) throw DataError("unknown lexicon: " + lexicon);
  const std::set<std::string> mset(marker->begin(), marker->end());
  for (const auto& [name, words] : g.lexicons) {
    if (name == lexicon) continue;
    for (const std::string& w : words)
      if (mset.count(w))
        throw DataError("marker lexicon " + lexicon + " shares word with " + name + ": " + w);
  }
  double total = 0, positive = 0;
  for (const Pattern& p : g.patterns) {
    total += p.weight;
    if (std::find(p.slots.begin(), p.slots.end(), lexicon) != p.slots.end())
      positive += p.weight;
  }
  return positive / total;
}

namespace {

// Per-word subword tagging: role entities get B- on the first piece and I-
// on continuations; role "O" words are O throughout.
void append_tags(const std::string& role, int pieces, const std::vector<std::string>& names,
                 std::vector<int>& tags) {
  const auto id_of = [&names](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return static_cast<int>(i);
    throw std::logic_error("tag name missing from table: " + n);
  };
  if (role == "O") {
    tags.insert(tags.end(), static_cast<std::size_t>(pieces), id_of("O"));
    return;
  }
  tags.push_back(id_of("B-" + role));
  for (int i = 1; i < pieces; ++i) tags.push_back(id_of("I-" + role));
}

// One character substitution that keeps the word's subword count. Returns
// the original word when no compliant edit is found.
std::string edit_word(const std::string& word, const Vocabulary& vocab, Rng& rng) {
  const int original_pieces = encode(word, vocab).n();
  for (int attempt = 0; attempt < 20; ++attempt) {
    std::string w = word;
    const std::size_t at = rng.uniform_int(w.size());
    const char c = static_cast<char>('a' + rng.uniform_int(26));
    if (w[at] == c) continue;
    w[at] = c;
    if (encode(w, vocab).n() == original_pieces) return w;
  }
  return word;
}

LabeledExample make_example(const QueryGrammar& g, Task task, const Vocabulary& vocab,
                            const std::vector<std::string>& tag_table,
                            const std::string& marker, double edit_rate, Rng& rng) {
  const GeneratedQuery q = sample_query(g, rng);
  LabeledExample ex;
  ex.text = join_ws(q.words);
  ex.x = encode(ex.text, vocab);

  switch (task) {
    case Task::ner: {
      for (std::size_t i = 0; i < q.words.size(); ++i) {
        const int pieces = encode(q.words[i], vocab).n();
        append_tags(g.role_of(q.slots[i]), pieces, tag_table, ex.tags);
      }
      if (static_cast<int>(ex.tags.size()) != ex.x.n())
        throw std::logic_error("tag alignment drifted from query encoding");
      break;
    }
    case Task::binary_cls: {
      const auto* mwords = g.find_lexicon(marker);
      if (!mwords) throw DataError("unknown lexicon: " + marker);
      ex.label = 0;
      for (const std::string& w : q.words)
        if (std::find(mwords->begin(), mwords->end(), w) != mwords->end()) ex.label = 1;
      break;
    }
    case Task::spell: {
      std::vector<std::string> corrupted = q.words;
      for (std::string& w : corrupted)
        if (rng.uniform() < edit_rate) w = edit_word(w, vocab, rng);
      ex.target_text = ex.text;
      ex.target = ex.x;
      ex.text = join_ws(corrupted);
      ex.x = encode(ex.text, vocab);
      if (ex.x.n() != ex.target.n())
        throw std::logic_error("edit guard failed to preserve token count");
      break;
    }
  }
  return ex;
}

}  // namespace

LabeledDataset generate_labeled(const QueryGrammar& g, Task task, const Vocabulary& vocab,
                                const LabeledGenOptions& opt) {
  g.validate();
  LabeledDataset ds;
  ds.task = task;
  ds.vocab_hash = vocab.hash();
  if (task == Task::ner) ds.tag_names = g.tag_names();

  const auto fill = [&](std::vector<LabeledExample>& split, const char* name, int count) {
    Rng rng(derive_seed(opt.seed, std::string("labeled.") + name, 0));
    for (int i = 0; i < count; ++i)
      split.push_back(make_example(g, task, vocab, ds.tag_names, opt.marker, opt.edit_rate, rng));
  };
  fill(ds.train, "train", opt.train);
  fill(ds.dev, "dev", opt.dev);
  fill(ds.test, "test", opt.test);
  return ds;
}

}  // namespace etclab
