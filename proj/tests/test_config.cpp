#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "etclab/config.hpp"
#include "etclab/errors.hpp"

using namespace etclab;

namespace {

struct TempFiles {
  std::vector<std::string> paths;
  std::string write(const std::string& p, const std::string& body) {
    std::ofstream(p) << body;
    paths.push_back(p);
    return p;
  }
  ~TempFiles() {
    for (const std::string& p : paths) std::remove(p.c_str());
  }
};

}  // namespace

TEST_CASE("config parsing") {
  TempFiles tmp;

  SUBCASE("key=value with comments and blanks") {
    const auto path = tmp.write("cfg_basic.cfg",
                                "# training knobs\n"
                                "lr = 1e-4\n"
                                "\n"
                                "steps=500  # inline note\n"
                                "stage = etc\n");
    const Config cfg = Config::from_file(path);
    CHECK(cfg.real("lr") == 1e-4);
    CHECK(cfg.integer("steps") == 500);
    CHECK(cfg.str("stage") == "etc");
    CHECK(cfg.has("lr"));
    CHECK_FALSE(cfg.has("batch"));
  }

  SUBCASE("later assignments win") {
    const auto path = tmp.write("cfg_dup.cfg", "lr=1\nlr=2\n");
    CHECK(Config::from_file(path).integer("lr") == 2);
  }

  SUBCASE("malformed lines are rejected") {
    const auto path = tmp.write("cfg_bad.cfg", "just words\n");
    CHECK_THROWS_AS(Config::from_file(path), DataError);
    const auto nokey = tmp.write("cfg_nokey.cfg", "=5\n");
    CHECK_THROWS_AS(Config::from_file(nokey), DataError);
    CHECK_THROWS_WITH_AS(Config::from_file("cfg_absent.cfg"),
                         "cannot read config: cfg_absent.cfg", DataError);
  }
}

TEST_CASE("config includes") {
  TempFiles tmp;

  SUBCASE("included values load and can be overridden") {
    tmp.write("cfg_base.cfg", "lr=1e-4\nsteps=100\n");
    const auto path = tmp.write("cfg_main.cfg",
                                "include cfg_base.cfg\n"
                                "steps=250\n");
    const Config cfg = Config::from_file(path);
    CHECK(cfg.real("lr") == 1e-4);
    CHECK(cfg.integer("steps") == 250);
  }

  SUBCASE("include before assignment keeps the includer's later value") {
    tmp.write("cfg_child2.cfg", "a=child\n");
    const auto path = tmp.write("cfg_order.cfg", "a=parent\ninclude cfg_child2.cfg\n");
    CHECK(Config::from_file(path).str("a") == "child");
  }

  SUBCASE("nested includes") {
    tmp.write("cfg_leaf.cfg", "depth=2\n");
    tmp.write("cfg_mid.cfg", "include cfg_leaf.cfg\nmid=1\n");
    const auto path = tmp.write("cfg_top.cfg", "include cfg_mid.cfg\n");
    const Config cfg = Config::from_file(path);
    CHECK(cfg.integer("depth") == 2);
    CHECK(cfg.integer("mid") == 1);
  }

  SUBCASE("cycles are rejected") {
    tmp.write("cfg_a.cfg", "include cfg_b.cfg\n");
    tmp.write("cfg_b.cfg", "include cfg_a.cfg\n");
    CHECK_THROWS_AS(Config::from_file("cfg_a.cfg"), DataError);
  }

  SUBCASE("missing include target") {
    const auto path = tmp.write("cfg_miss.cfg", "include cfg_not_there.cfg\n");
    CHECK_THROWS_AS(Config::from_file(path), DataError);
  }
}

TEST_CASE("config overrides and getters") {
  TempFiles tmp;
  const auto path = tmp.write("cfg_get.cfg",
                              "lr=1e-4\n"
                              "steps=100\n"
                              "clip=true\n"
                              "seed=18446744073709551615\n"
                              "count=-7\n"
                              "note=hello there\n");
  Config cfg = Config::from_file(path);

  SUBCASE("command line wins over the file") {
    cfg.apply_overrides({"lr=5e-5", "extra=1"});
    CHECK(cfg.real("lr") == 5e-5);
    CHECK(cfg.integer("extra") == 1);
    CHECK_THROWS_AS(cfg.apply_overrides({"no-equals-here"}), DataError);
  }

  SUBCASE("typed getters") {
    CHECK(cfg.integer("steps") == 100);
    CHECK(cfg.integer("count") == -7);
    CHECK(cfg.integer("absent", 9) == 9);
    CHECK(cfg.real("lr") == 1e-4);
    CHECK(cfg.real("absent", 0.5) == 0.5);
    CHECK(cfg.flag("clip", false));
    CHECK(cfg.flag("absent", true));
    CHECK(cfg.seed("seed", 0) == 18446744073709551615ull);
    CHECK(cfg.seed("absent", 3) == 3);
    CHECK(cfg.str("note") == "hello there");
  }

  SUBCASE("type errors") {
    CHECK_THROWS_WITH_AS(cfg.integer("note"), "config key note expects an integer, got \"hello there\"",
                         DataError);
    CHECK_THROWS_AS(cfg.real("note"), DataError);
    CHECK_THROWS_AS(cfg.flag("steps", false), DataError);
    CHECK_THROWS_AS(cfg.seed("count", 0), DataError);
    CHECK_THROWS_WITH_AS(cfg.str("missing"), "missing config key: missing", DataError);
  }

  SUBCASE("dump is sorted and parseable") {
    Config small;
    small.set("zeta", "1");
    small.set("alpha", "2");
    CHECK(small.dump() == "alpha=2\nzeta=1\n");
  }
}
