#include <algorithm>
#include <vector>

#include "doctest.h"
#include "etclab/metrics.hpp"
#include "etclab/rng.hpp"

using namespace etclab;

namespace {

const std::vector<std::string> kTagNames = {"O", "B-X", "I-X", "B-Y", "I-Y"};

// Independent span extraction: tests every (start, end, type) candidate
// against the maximal-run definition directly, including the stray-I repair
// (an I opens a span unless the previous tag carries the same entity type).
std::vector<Span> oracle_spans(const std::vector<int>& tags, const TagScheme& sch) {
  const int n = static_cast<int>(tags.size());
  const auto is_entity = [&](int i, int t) {
    return sch.kind[static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])] != TagScheme::kOutside &&
           sch.type[static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])] == t;
  };
  const auto is_inside = [&](int i, int t) {
    return sch.kind[static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])] == TagScheme::kInside &&
           sch.type[static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])] == t;
  };
  std::vector<Span> out;
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < 2; ++t) {
      if (!is_entity(i, t)) continue;
      const bool continues = is_inside(i, t) && i > 0 && is_entity(i - 1, t);
      if (continues) continue;
      int j = i;
      while (j + 1 < n && is_inside(j + 1, t)) ++j;
      out.push_back({i, j + 1, t});
    }
  std::sort(out.begin(), out.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });
  return out;
}

std::vector<int> nth_sequence(int len, int index) {
  std::vector<int> tags(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    tags[static_cast<std::size_t>(i)] = index % 5;
    index /= 5;
  }
  return tags;
}

}  // namespace

TEST_CASE("tag scheme parsing") {
  const TagScheme s = TagScheme::from_names(kTagNames);
  CHECK(s.size() == 5);
  CHECK(s.kind[0] == TagScheme::kOutside);
  CHECK(s.kind[1] == TagScheme::kBegin);
  CHECK(s.kind[2] == TagScheme::kInside);
  CHECK(s.type[1] == s.type[2]);
  CHECK(s.type[1] != s.type[3]);
  CHECK_THROWS_AS(TagScheme::from_names({"O", "Z-X"}), DataError);
  CHECK_THROWS_AS(TagScheme::from_names({"O", "B"}), DataError);
}

TEST_CASE("span extraction matches the brute-force oracle exhaustively") {
  const TagScheme sch = TagScheme::from_names(kTagNames);
  long long checked = 0;
  for (int len = 0; len <= 6; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 5;
    for (int idx = 0; idx < total; ++idx) {
      const auto tags = nth_sequence(len, idx);
      auto got = extract_spans(tags, sch);
      std::sort(got.begin(), got.end(),
                [](const Span& a, const Span& b) { return a.start < b.start; });
      if (got != oracle_spans(tags, sch)) {
        CAPTURE(len);
        CAPTURE(idx);
        REQUIRE(got == oracle_spans(tags, sch));
      }
      ++checked;
    }
  }
  CHECK(checked == 19531);
}

TEST_CASE("span f1 on sampled pairs agrees with set arithmetic on oracle spans") {
  const TagScheme sch = TagScheme::from_names(kTagNames);
  Rng rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const int len = 1 + static_cast<int>(rng.uniform_int(6));
    std::vector<int> pred(static_cast<std::size_t>(len)), gold(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(5));
      gold[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(5));
    }
    const auto ps = oracle_spans(pred, sch), gs = oracle_spans(gold, sch);
    long long match = 0;
    for (const Span& a : ps)
      if (std::find(gs.begin(), gs.end(), a) != gs.end()) ++match;
    double want;
    if (ps.empty() && gs.empty()) {
      want = 1.0;
    } else {
      const double p = ps.empty() ? 0.0 : static_cast<double>(match) / static_cast<double>(ps.size());
      const double r = gs.empty() ? 0.0 : static_cast<double>(match) / static_cast<double>(gs.size());
      want = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    const F1Result got = span_f1({pred}, {gold}, sch);
    CHECK(got.f1 == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("span f1 pinned examples") {
  const TagScheme sch = TagScheme::from_names(kTagNames);

  SUBCASE("identical non-empty tags score 1") {
    const std::vector<int> tags = {1, 2, 0, 3};
    CHECK(span_f1({tags}, {tags}, sch).f1 == 1.0);
  }
  SUBCASE("disjoint spans score 0") {
    CHECK(span_f1({{1, 2, 0}}, {{0, 1, 2}}, sch).f1 == 0.0);
  }
  SUBCASE("two spans each, one exact match") {
    // pred spans: X at [0,1), Y at [2,3); gold: X at [0,1), Y at [3,4)
    const F1Result r = span_f1({{1, 0, 3, 0}}, {{1, 0, 0, 3}}, sch);
    CHECK(r.precision == doctest::Approx(0.5));
    CHECK(r.recall == doctest::Approx(0.5));
    CHECK(r.f1 == doctest::Approx(0.5));
  }
  SUBCASE("both sides span-free score 1") {
    CHECK(span_f1({{0, 0}}, {{0, 0}}, sch).f1 == 1.0);
  }
  SUBCASE("spans on one side only score 0") {
    CHECK(span_f1({{1, 0}}, {{0, 0}}, sch).f1 == 0.0);
    CHECK(span_f1({{0, 0}}, {{1, 0}}, sch).f1 == 0.0);
  }
  SUBCASE("stray I opens a span and is counted as repaired") {
    long long repaired = 0;
    const auto spans = extract_spans({0, 2, 2}, sch, &repaired);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == Span{1, 3, sch.type[2]});
    CHECK(repaired == 1);

    const F1Result r = span_f1({{0, 2, 2}}, {{0, 1, 2}}, sch);
    CHECK(r.f1 == 1.0);
    CHECK(r.repaired == 1);
  }
  SUBCASE("type switch inside a run is repaired as a new span") {
    long long repaired = 0;
    const auto spans = extract_spans({1, 4}, sch, &repaired);
    REQUIRE(spans.size() == 2);
    CHECK(repaired == 1);
  }
  SUBCASE("order of sentences does not matter") {
    const std::vector<std::vector<int>> a = {{1, 2, 0}, {0, 3, 4}, {2, 0, 1}};
    const std::vector<std::vector<int>> b = {{1, 0, 0}, {3, 0, 0}, {0, 0, 1}};
    const double f = span_f1(a, b, sch).f1;
    CHECK(span_f1({a[2], a[0], a[1]}, {b[2], b[0], b[1]}, sch).f1 == doctest::Approx(f));
  }
  SUBCASE("length mismatch is a data error") {
    CHECK_THROWS_AS(span_f1({{0, 0}}, {{0}}, sch), DataError);
    CHECK_THROWS_AS(span_f1({{0}, {0}}, {{0}}, sch), DataError);
  }
}

TEST_CASE("binary f1") {
  CHECK(binary_f1({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(binary_f1({0, 0, 0}, {1, 0, 1}) == 0.0);
  // TP=1 FP=1 FN=1: pred flags two, hits one, misses one.
  CHECK(binary_f1({1, 1, 0}, {1, 0, 1}) == doctest::Approx(0.5));
  CHECK(binary_f1({0, 0}, {0, 0}) == 1.0);
  CHECK_THROWS_AS(binary_f1({1}, {1, 0}), DataError);
}

TEST_CASE("exact match accuracy") {
  CHECK(exact_match_accuracy({{1, 2}, {3}}, {{1, 2}, {3}}) == 1.0);
  CHECK(exact_match_accuracy({{1, 2}, {3}}, {{1, 9}, {3}}) == doctest::Approx(0.5));
  CHECK_THROWS_WITH_AS(exact_match_accuracy({}, {}), "empty split", DataError);
  CHECK_THROWS_AS(exact_match_accuracy({{1}}, {{1}, {2}}), DataError);
}
