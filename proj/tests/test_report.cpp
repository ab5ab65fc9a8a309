#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "etclab/report.hpp"

using namespace etclab;

namespace {

struct TempFiles {
  std::vector<std::string> paths;
  std::string track(const std::string& p) {
    paths.push_back(p);
    return p;
  }
  ~TempFiles() {
    for (const std::string& p : paths) std::remove(p.c_str());
  }
};

EvalReport seed_report(double value, long long support = 24) {
  EvalReport r;
  r.task = "ner";
  r.metric = "span_f1";
  r.value = value;
  r.per_seed = {value};
  r.support = support;
  return r;
}

ReportEntry entry(const std::string& method, const std::string& task, double ratio,
                  double value) {
  ReportEntry e;
  e.method = method;
  e.task = task;
  e.metric = task == "ner" ? "span_f1" : "binary_f1";
  e.ratio = ratio;
  e.value = value;
  e.per_seed = {value};
  e.support = 24;
  return e;
}

}  // namespace

TEST_CASE("report aggregation") {
  SUBCASE("mean over seeds") {
    const ReportEntry e = make_entry("etc", 1.0, {seed_report(0.5), seed_report(0.7),
                                                  seed_report(0.9)});
    CHECK(e.method == "etc");
    CHECK(e.task == "ner");
    CHECK(e.metric == "span_f1");
    CHECK(e.value == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(e.per_seed == std::vector<double>{0.5, 0.7, 0.9});
    CHECK(e.support == 24);
  }

  SUBCASE("disagreeing seed reports are rejected") {
    EvalReport other = seed_report(0.5);
    other.task = "spell";
    other.metric = "exact_match";
    CHECK_THROWS_AS(make_entry("etc", 1.0, {seed_report(0.5), other}), DataError);
    CHECK_THROWS_AS(make_entry("etc", 1.0, {seed_report(0.5), seed_report(0.6, 12)}), DataError);
    CHECK_THROWS_AS(make_entry("etc", 1.0, {}), DataError);
  }
}

TEST_CASE("report files") {
  TempFiles tmp;

  SUBCASE("round trip") {
    const ReportEntry e = entry("etc", "ner", 0.1, 0.75);
    const auto path = tmp.track("report_rt.json");
    save_report(path, e);
    const ReportEntry back = load_report(path);
    CHECK(back.method == e.method);
    CHECK(back.task == e.task);
    CHECK(back.metric == e.metric);
    CHECK(back.ratio == e.ratio);
    CHECK(back.value == e.value);
    CHECK(back.per_seed == e.per_seed);
    CHECK(back.support == e.support);
  }

  SUBCASE("malformed files are rejected") {
    CHECK_THROWS_AS(load_report("report_absent.json"), DataError);

    const auto garbage = tmp.track("report_garbage.json");
    std::ofstream(garbage) << "not json at all";
    CHECK_THROWS_AS(load_report(garbage), DataError);

    const auto missing = tmp.track("report_missing_field.json");
    std::ofstream(missing) << R"({"method":"etc","task":"ner"})";
    CHECK_THROWS_AS(load_report(missing), DataError);

    const auto range = tmp.track("report_range.json");
    ReportEntry bad = entry("etc", "ner", 1.0, 0.5);
    bad.value = 1.5;
    save_report(range, bad);
    CHECK_THROWS_AS(load_report(range), DataError);
  }
}

TEST_CASE("method table") {
  SUBCASE("single cell rendering is exact") {
    const std::string table = method_table({entry("mlm", "ner", 1.0, 0.5)});
    CHECK(table == "method     ner\nmlm     0.5000\n");
  }

  SUBCASE("rows are methods, columns are tasks") {
    const std::string table = method_table({
        entry("mlm", "ner", 1.0, 0.7367),
        entry("electra", "ner", 1.0, 0.7226),
        entry("etc", "ner", 1.0, 0.7423),
        entry("etc", "binary_cls", 1.0, 0.91),
    });
    CHECK(table.find("method") == 0);
    CHECK(table.find("ner") != std::string::npos);
    CHECK(table.find("binary_cls") != std::string::npos);
    CHECK(table.find("0.7423") != std::string::npos);
    // mlm has no binary_cls entry, so its row carries a placeholder.
    CHECK(table.find('-') != std::string::npos);
    CHECK(table.find("mlm") < table.find("electra"));
    CHECK(table.find("electra") < table.find("etc\n") + table.size());
  }

  SUBCASE("few-shot entries are excluded") {
    CHECK_THROWS_AS(method_table({entry("etc", "ner", 0.1, 0.6)}), DataError);
    const std::string table = method_table({
        entry("etc", "ner", 0.1, 0.6),
        entry("etc", "ner", 1.0, 0.8),
    });
    CHECK(table.find("0.8000") != std::string::npos);
    CHECK(table.find("0.6000") == std::string::npos);
  }

  SUBCASE("duplicates are rejected") {
    CHECK_THROWS_AS(method_table({entry("etc", "ner", 1.0, 0.8), entry("etc", "ner", 1.0, 0.7)}),
                    DataError);
  }
}

TEST_CASE("few-shot table") {
  const std::vector<ReportEntry> entries = {
      entry("mlm", "ner", 1.0, 0.7),
      entry("mlm", "ner", 0.1, 0.5),
      entry("etc", "ner", 1.0, 0.8),
      entry("etc", "ner", 0.1, 0.6),
  };
  const std::string table = fewshot_table(entries);

  SUBCASE("ratios ascend across columns") {
    CHECK(table.find("task: ner") == 0);
    CHECK(table.find("10%") != std::string::npos);
    CHECK(table.find("100%") != std::string::npos);
    CHECK(table.find("10%") < table.find("100%"));
    CHECK(table.find("0.6000") < table.find("0.8000"));
  }

  SUBCASE("tasks render as separate blocks") {
    auto more = entries;
    more.push_back(entry("etc", "binary_cls", 1.0, 0.9));
    const std::string two = fewshot_table(more);
    CHECK(two.find("task: ner") != std::string::npos);
    CHECK(two.find("task: binary_cls") != std::string::npos);
  }

  SUBCASE("duplicate ratio entries are rejected") {
    auto dup = entries;
    dup.push_back(entry("etc", "ner", 0.1, 0.61));
    CHECK_THROWS_AS(fewshot_table(dup), DataError);
  }
}
