#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "etclab/pretrain.hpp"

using namespace etclab;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 16;
  cfg.ffn = 32;
  cfg.heads = 2;
  cfg.max_len = 16;
  cfg.vocab_size = 32;
  cfg.dropout = 0.0;
  return cfg;
}

// Consecutive-id runs over the non-special range. Every interior token is
// determined by its neighbors, so a masked LM has real signal to learn.
std::vector<TokenSequence> toy_corpus(const EncoderConfig& cfg, int count, std::uint64_t seed) {
  Rng rng(seed);
  const int lo = 4, span = cfg.vocab_size - lo;
  std::vector<TokenSequence> out;
  for (int i = 0; i < count; ++i) {
    TokenSequence s;
    const int n = 3 + static_cast<int>(rng.uniform_int(6));
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
    for (int t = 0; t < n; ++t) s.ids.push_back(lo + (start + t) % span);
    out.push_back(std::move(s));
  }
  return out;
}

// Generator whose mlm head is a pure bias: body output is irrelevant and the
// fill distribution is identical at every position.
Generator<double> bias_generator(const EncoderConfig& cfg, const std::vector<double>& bias) {
  HeadSpec heads;
  heads.mlm = true;
  Generator<double> gen{init_params<double>(cfg, heads, 3), FillMode::argmax, 1.0};
  gen.params.mlm_w = Tensor<double>(gen.params.mlm_w.shape);
  for (int i = 0; i < cfg.vocab_size; ++i)
    gen.params.mlm_b[static_cast<std::size_t>(i)] =
        i < static_cast<int>(bias.size()) ? bias[static_cast<std::size_t>(i)] : 0.0;
  return gen;
}

// Strips the wall-clock field so reruns of the same config compare equal.
std::string without_wall(const std::string& log) {
  std::string out;
  std::istringstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    const auto at = line.find(" wall_ms=");
    out += line.substr(0, at);
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("generator fill") {
  EncoderConfig cfg = tiny_config();

  SUBCASE("zero masks is the identity") {
    Generator<double> gen = bias_generator(cfg, {});
    TokenSequence x{{4, 5, 6}};
    Rng rng(1);
    CHECK(generator_fill(gen, x, rng).ids == x.ids);
  }

  SUBCASE("argmax picks the highest-scoring allowed token") {
    std::vector<double> bias(32, 0.0);
    bias[7] = 10.0;
    Generator<double> gen = bias_generator(cfg, bias);
    TokenSequence temp{{Vocabulary::kMaskId, 4, 5, 6}};
    Rng rng(1);
    const TokenSequence out = generator_fill(gen, temp, rng);
    CHECK(out.ids == std::vector<std::int32_t>{7, 4, 5, 6});
  }

  SUBCASE("specials never win even with dominant logits") {
    std::vector<double> bias(32, 0.0);
    bias[Vocabulary::kPadId] = 50.0;
    bias[Vocabulary::kClsId] = 49.0;
    bias[Vocabulary::kMaskId] = 48.0;
    bias[Vocabulary::kUnkId] = 5.0;
    Generator<double> gen = bias_generator(cfg, bias);
    TokenSequence temp{{Vocabulary::kMaskId, 9}};
    Rng rng(1);
    CHECK(generator_fill(gen, temp, rng).ids[0] == Vocabulary::kUnkId);

    gen.fill_mode = FillMode::sample;
    for (std::uint64_t s = 0; s < 50; ++s) {
      Rng r2(s);
      const auto id = generator_fill(gen, temp, r2).ids[0];
      CHECK(id != Vocabulary::kPadId);
      CHECK(id != Vocabulary::kClsId);
      CHECK(id != Vocabulary::kMaskId);
    }
  }

  SUBCASE("argmax ties resolve to the lowest id") {
    Generator<double> gen = bias_generator(cfg, {});
    TokenSequence temp{{Vocabulary::kMaskId}};
    Rng rng(1);
    CHECK(generator_fill(gen, temp, rng).ids[0] == Vocabulary::kUnkId);
  }

  SUBCASE("sample mode under a fixed seed reproduces exactly") {
    HeadSpec heads;
    heads.mlm = true;
    Generator<double> gen{init_params<double>(tiny_config(), heads, 17), FillMode::sample, 1.0};
    TokenSequence temp{{Vocabulary::kMaskId, 8, Vocabulary::kMaskId, 12, 13}};
    Rng a(42), b(42);
    CHECK(generator_fill(gen, temp, a).ids == generator_fill(gen, temp, b).ids);
    Rng c(43);
    const TokenSequence other = generator_fill(gen, temp, c);
    CHECK(other.ids.size() == temp.ids.size());
  }

  SUBCASE("missing mlm head is a data error") {
    HeadSpec heads;
    heads.disc = true;
    Generator<double> gen{init_params<double>(tiny_config(), heads, 1), FillMode::sample, 1.0};
    TokenSequence temp{{Vocabulary::kMaskId}};
    Rng rng(1);
    CHECK_THROWS_WITH_AS(generator_fill(gen, temp, rng), "generator lacks mlm head", DataError);
  }
}

TEST_CASE("loss wrappers pin their reference values") {
  Graph<double> g;

  SUBCASE("uniform probabilities give ln 2") {
    auto probs = g.input(Tensor<double>({4}, 0.5), false);
    const auto loss = disc_loss(g, probs, {1, 0, 1, 0}, {1, 1, 1, 1});
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("hand-evaluated two-position case") {
    auto probs = g.input(Tensor<double>({2}, std::vector<double>{0.8, 0.3}), false);
    const auto loss = disc_loss(g, probs, {1, 0}, {1, 1});
    CHECK(g.value(loss)[0] ==
          doctest::Approx((-std::log(0.8) - std::log(0.7)) / 2).epsilon(1e-12));
  }

  SUBCASE("uniform logits over 512 classes give ln 512") {
    auto logits = g.input(Tensor<double>({1, 512}, 0.0), false);
    const auto loss = mlm_loss(g, logits, {17}, {1});
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(512.0)).epsilon(1e-12));
  }

  SUBCASE("zero masked positions give zero loss") {
    auto logits = g.input(Tensor<double>({2, 8}, 1.5), false);
    const auto loss = mlm_loss(g, logits, {0, 0}, {0, 0});
    CHECK(g.value(loss)[0] == 0.0);
  }
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.steps = 1;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = tc;
  bad.p_or_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("mlm pre-training") {
  const EncoderConfig cfg = tiny_config();
  const auto corpus = toy_corpus(cfg, 200, 5);

  SUBCASE("zero steps returns the untouched initialization") {
    TrainConfig tc;
    tc.steps = 0;
    tc.seed = 9;
    HeadSpec heads;
    heads.mlm = true;
    const auto fresh = init_params<double>(cfg, heads, 9);
    const auto trained = pretrain_mlm<double>(tc, cfg, corpus, nullptr);
    CHECK(params_hash(trained) == params_hash(fresh));
  }

  SUBCASE("empty corpus is rejected") {
    TrainConfig tc;
    tc.steps = 1;
    CHECK_THROWS_WITH_AS(pretrain_mlm<double>(tc, cfg, {}, nullptr), "empty corpus", DataError);
  }

  SUBCASE("200 steps cut the loss at least 20% below ln V, five seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig tc;
      tc.steps = 200;
      tc.batch_size = 16;
      tc.lr = 3e-2;
      tc.seed = seed;
      PretrainResult result;
      pretrain_mlm<double>(tc, cfg, corpus, nullptr, &result);
      REQUIRE(result.losses.size() == 200);
      double tail = 0;
      for (std::size_t i = 190; i < 200; ++i) tail += result.losses[i];
      tail /= 10;
      CHECK(tail < 0.8 * std::log(static_cast<double>(cfg.vocab_size)));
    }
  }

  SUBCASE("identical seeds give identical loss curves and logs") {
    TrainConfig tc;
    tc.steps = 20;
    tc.batch_size = 4;
    tc.seed = 77;
    tc.eval_every = 5;
    std::ostringstream log_a, log_b;
    PretrainResult ra, rb;
    pretrain_mlm<double>(tc, cfg, corpus, &log_a, &ra);
    pretrain_mlm<double>(tc, cfg, corpus, &log_b, &rb);
    CHECK(ra.losses == rb.losses);
    CHECK(ra.wasted == rb.wasted);
    CHECK(without_wall(log_a.str()) == without_wall(log_b.str()));
    CHECK(log_a.str().find("stage=mlm") != std::string::npos);
  }

  SUBCASE("rate zero wastes every query and moves weights only by decay") {
    TrainConfig tc;
    tc.steps = 3;
    tc.batch_size = 4;
    tc.p_or_rate = 0.0;
    tc.seed = 1;
    PretrainResult result;
    pretrain_mlm<double>(tc, cfg, corpus, nullptr, &result);
    CHECK(result.wasted == 12);
    for (const double l : result.losses) CHECK(l == 0.0);
  }
}

TEST_CASE("etc and electra stages") {
  const EncoderConfig cfg = tiny_config();
  const auto corpus = toy_corpus(cfg, 200, 6);

  TrainConfig mlm_tc;
  mlm_tc.steps = 30;
  mlm_tc.batch_size = 8;
  mlm_tc.lr = 1e-3;
  mlm_tc.seed = 11;
  const auto gen_params = pretrain_mlm<double>(mlm_tc, cfg, corpus, nullptr);
  const std::string gen_hash = params_hash(gen_params);

  SUBCASE("first etc loss is exactly ln 2 from the zeroed disc head") {
    TrainConfig tc;
    tc.stage = Stage::etc;
    tc.steps = 5;
    tc.batch_size = 4;
    tc.seed = 21;
    PretrainResult result;
    pretrain_etc<double>(tc, gen_params, corpus, nullptr, &result);
    REQUIRE(!result.losses.empty());
    CHECK(result.losses[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(result.losses[0] - std::log(2.0)) / std::log(2.0) < 0.05);
    CHECK(result.wasted == 0);
  }

  SUBCASE("generator weights stay bit-identical through both stages") {
    TrainConfig tc;
    tc.stage = Stage::etc;
    tc.steps = 50;
    tc.batch_size = 4;
    tc.seed = 22;
    pretrain_etc<double>(tc, gen_params, corpus, nullptr);
    CHECK(params_hash(gen_params) == gen_hash);
    tc.stage = Stage::electra;
    pretrain_electra<double>(tc, gen_params, corpus, nullptr);
    CHECK(params_hash(gen_params) == gen_hash);
  }

  SUBCASE("electra emits the same log schema as etc") {
    TrainConfig tc;
    tc.steps = 4;
    tc.batch_size = 4;
    tc.seed = 23;
    tc.eval_every = 2;
    std::ostringstream etc_stream, electra_stream;
    pretrain_etc<double>(tc, gen_params, corpus, &etc_stream);
    pretrain_electra<double>(tc, gen_params, corpus, &electra_stream);
    const std::string etc_log = etc_stream.str(), electra_log = electra_stream.str();
    for (const std::string* s : {&etc_log, &electra_log}) {
      CHECK(s->find("step=") != std::string::npos);
      CHECK(s->find("loss=") != std::string::npos);
      CHECK(s->find("lr=") != std::string::npos);
      CHECK(s->find("wasted=") != std::string::npos);
      CHECK(s->find("wall_ms=") != std::string::npos);
    }
    CHECK(etc_log.find("stage=etc") != std::string::npos);
    CHECK(electra_log.find("stage=electra") != std::string::npos);
  }

  SUBCASE("etc discriminator learns past chance") {
    TrainConfig tc;
    tc.stage = Stage::etc;
    tc.steps = 150;
    tc.batch_size = 8;
    tc.lr = 1e-3;
    tc.seed = 24;
    PretrainResult result;
    pretrain_etc<double>(tc, gen_params, corpus, nullptr, &result);
    double tail = 0;
    for (std::size_t i = result.losses.size() - 10; i < result.losses.size(); ++i)
      tail += result.losses[i];
    tail /= 10;
    CHECK(tail < std::log(2.0));
  }

  SUBCASE("generator without mlm head is rejected") {
    HeadSpec heads;
    heads.disc = true;
    const auto bad = init_params<double>(cfg, heads, 1);
    TrainConfig tc;
    tc.steps = 1;
    CHECK_THROWS_AS(pretrain_etc<double>(tc, bad, corpus, nullptr), DataError);
  }
}
