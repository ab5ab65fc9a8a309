#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "etclab/errors.hpp"
#include "etclab/rng.hpp"
#include "etclab/tokenizer.hpp"

using etclab::DataError;
using etclab::decode;
using etclab::encode;
using etclab::normalize;
using etclab::TokenSequence;
using etclab::train_vocab;
using etclab::Vocabulary;

namespace {

std::vector<std::string> sample_corpus() {
  return {
      "bamboo charcoal bag",       "bamboo charcoal bags",    "charcoal air purifier",
      "air purifying bag",         "bamboo bag large",        "laptop stand adjustable",
      "laptop stand wood",         "wooden laptop riser",     "adjustable desk stand",
      "desk organizer wood",       "wireless mouse ergonomic", "ergonomic mouse pad",
      "wireless keyboard compact", "compact mechanical keyboard",
  };
}

}  // namespace

TEST_CASE("normalize lowercases, folds accents, collapses whitespace") {
  CHECK(normalize("Bamboo Charcoal Bag") == "bamboo charcoal bag");
  CHECK(normalize("Café") == "cafe");
  CHECK(normalize("") == "");
  CHECK(normalize("  many\t spaces\n here ") == "many spaces here");
  CHECK(normalize("CRÈME BRÛLÉE") == "creme brulee");
  CHECK(normalize("señor Łódź") == "senor lodz");
  CHECK(normalize("straße") == "strasse");
  // combining acute after 'e' is dropped
  CHECK(normalize("Cafe\xCC\x81") == "cafe");
  // invalid bytes vanish
  CHECK(normalize("ab\xFF\xFE cd") == "ab cd");
  CHECK(normalize("ПРИВЕТ") == "привет");
}

TEST_CASE("normalize is idempotent on varied inputs") {
  const std::vector<std::string> inputs = {
      "Bamboo Charcoal Bag", "Café au lait", "  x  ", "ŒUF œuf", "ĲSSELMEER",
      "mixed ΣΠΙΤΙ text",    "\t\n",         "",      "a\xC3"  /* truncated utf-8 */,
  };
  for (const std::string& s : inputs) {
    const std::string once = normalize(s);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("train_vocab on a toy corpus follows the documented merge order") {
  // Hand simulation of max-frequency merges with lexicographic ties on
  // {"aaab","aab"}: pairs (##a,##b) and (a,##a) both occur twice, the tie
  // goes to (##a,##b), and the remaining singleton pairs resolve in order
  // ##aab, aaab, aab.
  const Vocabulary v = train_vocab({"aaab", "aab"}, 12, 1);
  const std::vector<std::string> expect = {"[PAD]", "[UNK]", "[CLS]", "[MASK]", "a",    "b",
                                           "##a",   "##b",   "##ab",  "##aab",  "aaab", "aab"};
  CHECK(v.tokens == expect);
}

TEST_CASE("train_vocab validates inputs") {
  CHECK_THROWS_AS(train_vocab({}, 64, 2), DataError);
  CHECK_THROWS_AS(train_vocab({"", "   "}, 64, 2), DataError);
  // 4 specials + 2 chars in bare and continuation form = 8 minimum
  CHECK_THROWS_AS(train_vocab({"ab", "ab"}, 7, 1), DataError);
  CHECK_NOTHROW(train_vocab({"ab", "ab"}, 8, 1));
}

TEST_CASE("vocabulary is deterministic and independent of corpus order") {
  auto corpus = sample_corpus();
  const Vocabulary a = train_vocab(corpus, 96, 1);
  std::reverse(corpus.begin(), corpus.end());
  const Vocabulary b = train_vocab(corpus, 96, 1);
  CHECK(a.tokens == b.tokens);
  CHECK(a.hash() == b.hash());
}

TEST_CASE("specials hold the first four ids in fixed order") {
  const Vocabulary v = train_vocab(sample_corpus(), 96, 1);
  CHECK(v.tokens[0] == "[PAD]");
  CHECK(v.tokens[1] == "[UNK]");
  CHECK(v.tokens[2] == "[CLS]");
  CHECK(v.tokens[3] == "[MASK]");
  CHECK(Vocabulary::kPadId == 0);
  CHECK(Vocabulary::kUnkId == 1);
  CHECK(Vocabulary::kClsId == 2);
  CHECK(Vocabulary::kMaskId == 3);
}

TEST_CASE("encode greedy longest match and unknown handling") {
  const Vocabulary v = train_vocab(sample_corpus(), 160, 1);
  const TokenSequence full = encode("bamboo charcoal bag", v);
  CHECK(decode(full, v) == "bamboo charcoal bag");

  // a script with no character in the vocabulary collapses to one unk per word
  const TokenSequence unk = encode("日本", v);
  REQUIRE(unk.n() == 1);
  CHECK(unk.ids[0] == Vocabulary::kUnkId);

  // specials never come out of encode
  const TokenSequence tricky = encode("[MASK] [PAD] [CLS]", v);
  for (const auto id : tricky.ids) {
    CHECK(id != Vocabulary::kMaskId);
    CHECK(id != Vocabulary::kPadId);
    CHECK(id != Vocabulary::kClsId);
  }
}

TEST_CASE("encode of an unseen composite word uses subword pieces") {
  const Vocabulary v = train_vocab(sample_corpus(), 160, 1);
  const TokenSequence seq = encode("woodstand", v);
  CHECK(seq.n() >= 2);  // never seen as a whole word, must split
  for (const auto id : seq.ids) CHECK(id != Vocabulary::kUnkId);
  CHECK(decode(seq, v) == "woodstand");
}

TEST_CASE("encode-decode round trip is stable") {
  const Vocabulary v = train_vocab(sample_corpus(), 128, 1);
  etclab::Rng rng(404);
  const auto corpus = sample_corpus();
  for (int trial = 0; trial < 1000; ++trial) {
    // random concatenations of corpus lines with random casing
    std::string text = corpus[rng.uniform_int(corpus.size())];
    if (rng.bernoulli(0.5)) text += " " + corpus[rng.uniform_int(corpus.size())];
    for (char& c : text)
      if (rng.bernoulli(0.3) && c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
    const TokenSequence once = encode(text, v);
    const TokenSequence twice = encode(decode(once, v), v);
    CHECK(once.ids == twice.ids);
  }
}

TEST_CASE("decode rejects out-of-range ids") {
  const Vocabulary v = train_vocab(sample_corpus(), 96, 1);
  TokenSequence bad;
  bad.ids = {v.size()};
  CHECK_THROWS_AS(decode(bad, v), DataError);
  bad.ids = {-1};
  CHECK_THROWS_AS(decode(bad, v), DataError);
  CHECK(decode(TokenSequence{}, v) == "");
}

TEST_CASE("vocabulary serialization round-trips bit-exactly") {
  const Vocabulary v = train_vocab(sample_corpus(), 128, 1);
  const std::string path = "vocab_roundtrip_test.txt";
  etclab::save_vocab(v, path);
  const Vocabulary w = etclab::load_vocab(path);
  CHECK(v.tokens == w.tokens);
  CHECK(v.hash() == w.hash());

  etclab::save_vocab(w, path + ".second");
  std::ifstream f1(path, std::ios::binary), f2(path + ".second", std::ios::binary);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
  std::remove(path.c_str());
  std::remove((path + ".second").c_str());
}

TEST_CASE("load_vocab rejects malformed files") {
  const std::string path = "vocab_malformed_test.txt";
  {
    std::ofstream f(path, std::ios::binary);
    f << "[PAD]\n[UNK]\n[MASK]\n[CLS]\na\n";  // wrong special order
  }
  CHECK_THROWS_AS(etclab::load_vocab(path), DataError);
  {
    std::ofstream f(path, std::ios::binary);
    f << "[PAD]\n[UNK]\n[CLS]\n[MASK]\na\na\n";  // duplicate
  }
  CHECK_THROWS_AS(etclab::load_vocab(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(etclab::load_vocab("does_not_exist_anywhere.vocab"), DataError);
}
