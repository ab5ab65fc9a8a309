#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <sstream>
#include <streambuf>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "etclab/config.hpp"
#include "etclab/corruption.hpp"
#include "etclab/dataset.hpp"
#include "etclab/downstream.hpp"
#include "etclab/errors.hpp"
#include "etclab/grammar.hpp"
#include "etclab/pretrain.hpp"
#include "etclab/report.hpp"
#include "etclab/tokenizer.hpp"

namespace {

using namespace etclab;

constexpr const char* kVersionString = "1.0.0";

// Mirrors training logs to the console and to the log file next to the
// checkpoint, so reruns can be compared offline.
class TeeBuf final : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 private:
  int overflow(int c) override {
    if (c != traits_type::eof()) {
      a_->sputc(static_cast<char>(c));
      b_->sputc(static_cast<char>(c));
    }
    return c;
  }
  int sync() override {
    a_->pubsync();
    b_->pubsync();
    return 0;
  }

  std::streambuf* a_;
  std::streambuf* b_;
};

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Option storage for one subcommand. Flag values are plain text and funnel
// through Config, so the file, --set, and explicit flags share one parser
// and one precedence rule: file < --set < flag.
struct CommandOpts {
  std::string config;
  std::vector<std::string> sets;
  std::deque<std::string> pool;  // stable addresses for registered flags
  std::vector<std::pair<CLI::Option*, std::pair<std::string, const std::string*>>> flags;
};

void add_common(CLI::App* sc, CommandOpts& o) {
  sc->add_option("--config", o.config, "key=value config file (supports include)");
  sc->add_option("--set", o.sets, "override a config key, e.g. --set lr=3e-4");
}

void add_key(CLI::App* sc, CommandOpts& o, const std::string& flag, const std::string& key,
             const std::string& help) {
  o.pool.emplace_back();
  std::string& storage = o.pool.back();
  CLI::Option* opt = sc->add_option(flag, storage, help);
  o.flags.push_back({opt, {key, &storage}});
}

Config resolve_config(const CommandOpts& o) {
  Config cfg = o.config.empty() ? Config() : Config::from_file(o.config);
  cfg.apply_overrides(o.sets);
  for (const auto& [opt, kv] : o.flags)
    if (opt->count() > 0) cfg.set(kv.first, *kv.second);
  return cfg;
}

// Read-and-stamp getters: the returned value also lands back in the config
// so the manifest records every knob at its resolved value.
long long resolve_int(Config& cfg, const std::string& key, long long fallback) {
  const long long v = cfg.integer(key, fallback);
  cfg.set(key, std::to_string(v));
  return v;
}

double resolve_real(Config& cfg, const std::string& key, double fallback) {
  const double v = cfg.real(key, fallback);
  cfg.set(key, fmt_f64(v));
  return v;
}

std::uint64_t resolve_seed(Config& cfg, const std::string& key, std::uint64_t fallback) {
  const std::uint64_t v = cfg.seed(key, fallback);
  cfg.set(key, std::to_string(v));
  return v;
}

bool resolve_flag(Config& cfg, const std::string& key, bool fallback) {
  const bool v = cfg.flag(key, fallback);
  cfg.set(key, v ? "true" : "false");
  return v;
}

std::string resolve_str(Config& cfg, const std::string& key, const std::string& fallback) {
  const std::string v = cfg.str(key, fallback);
  cfg.set(key, v);
  return v;
}

void write_manifest(const std::string& out_path, Config cfg, const char* command) {
  cfg.set("command", command);
  cfg.set("etclab_version", kVersionString);
  const std::string path = out_path + ".manifest";
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << cfg.dump();
}

TrainConfig resolve_train(Config& cfg) {
  TrainConfig tc;
  tc.steps = resolve_int(cfg, "steps", 10000);
  tc.batch_size = static_cast<int>(resolve_int(cfg, "batch_size", 32));
  tc.lr = resolve_real(cfg, "lr", 1e-4);
  tc.weight_decay = resolve_real(cfg, "weight_decay", 0.01);
  tc.beta1 = resolve_real(cfg, "beta1", 0.9);
  tc.beta2 = resolve_real(cfg, "beta2", 0.999);
  tc.p_or_rate = resolve_real(cfg, "rate", 0.15);
  tc.seed = resolve_seed(cfg, "seed", 1);
  tc.eval_every = resolve_int(cfg, "eval_every", 100);
  tc.clip_norm = resolve_real(cfg, "clip_norm", 1.0);
  tc.init_checkpoint = resolve_str(cfg, "init_checkpoint", "");
  const std::string prec = resolve_str(cfg, "precision", "f64");
  if (prec == "f64") tc.precision = Precision::f64;
  else if (prec == "f32") tc.precision = Precision::f32;
  else throw DataError("config key precision expects f32 or f64, got \"" + prec + "\"");
  tc.validate();
  return tc;
}

EncoderConfig resolve_encoder(Config& cfg, int vocab_size) {
  EncoderConfig e;
  e.layers = static_cast<int>(resolve_int(cfg, "layers", 2));
  e.hidden = static_cast<int>(resolve_int(cfg, "hidden", 64));
  e.ffn = static_cast<int>(resolve_int(cfg, "ffn", 256));
  e.heads = static_cast<int>(resolve_int(cfg, "heads", 4));
  e.max_len = static_cast<int>(resolve_int(cfg, "max_len", 128));
  e.dropout = resolve_real(cfg, "dropout", 0.1);
  e.vocab_size = vocab_size;
  cfg.set("vocab_size", std::to_string(vocab_size));
  e.validate();
  return e;
}

// Stamps a checkpoint's architecture into the manifest config.
void stamp_encoder(Config& cfg, const EncoderConfig& e) {
  cfg.set("layers", std::to_string(e.layers));
  cfg.set("hidden", std::to_string(e.hidden));
  cfg.set("ffn", std::to_string(e.ffn));
  cfg.set("heads", std::to_string(e.heads));
  cfg.set("max_len", std::to_string(e.max_len));
  cfg.set("dropout", fmt_f64(e.dropout));
  cfg.set("vocab_size", std::to_string(e.vocab_size));
}

LoadedCheckpoint load_checked(const std::string& path, const Vocabulary& vocab) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.vocab_hash != vocab.hash()) throw DataError("vocabulary mismatch");
  return ckpt;
}

// ---- gen-corpus ----

void run_gen_corpus(const CommandOpts& o) {
  Config cfg = resolve_config(o);
  const std::string grammar_path = cfg.str("grammar");
  const std::string out = cfg.str("out");
  const std::uint64_t seed = resolve_seed(cfg, "seed", 1);
  const std::string task = resolve_str(cfg, "task", "");

  const QueryGrammar grammar = load_grammar(grammar_path);
  if (task.empty()) {
    const long long count = resolve_int(cfg, "count", 50000);
    const auto corpus = generate_corpus(grammar, static_cast<int>(count), seed);
    save_corpus(out, corpus);
    write_manifest(out, cfg, "gen-corpus");
    std::cout << "gen-corpus: wrote " << corpus.size() << " queries to " << out << '\n';
    return;
  }

  // Labeled mode: `out` is a dataset prefix and three split files appear
  // next to it. Tags and labels come from grammar ground truth, so the
  // vocabulary must already exist.
  const Vocabulary vocab = load_vocab(cfg.str("vocab"));
  LabeledGenOptions opt;
  opt.train = static_cast<int>(resolve_int(cfg, "train", 500));
  opt.dev = static_cast<int>(resolve_int(cfg, "dev", 100));
  opt.test = static_cast<int>(resolve_int(cfg, "test", 100));
  opt.seed = seed;
  opt.marker = resolve_str(cfg, "marker", "media");
  opt.edit_rate = resolve_real(cfg, "edit_rate", 0.3);
  const LabeledDataset data = generate_labeled(grammar, task_from_name(task), vocab, opt);
  save_labeled_dataset(out, data);
  write_manifest(out, cfg, "gen-corpus");
  std::cout << "gen-corpus: wrote " << task << " splits " << opt.train << "/" << opt.dev << "/"
            << opt.test << " at " << out << '\n';
}

// ---- train-tokenizer ----

void run_train_tokenizer(const CommandOpts& o) {
  Config cfg = resolve_config(o);
  const std::string corpus_path = cfg.str("corpus");
  const std::string out = cfg.str("out");
  const long long vocab_size = resolve_int(cfg, "vocab_size", 512);
  const long long min_freq = resolve_int(cfg, "min_freq", 2);

  const Vocabulary vocab = train_vocab(load_corpus_text(corpus_path),
                                       static_cast<int>(vocab_size), static_cast<int>(min_freq));
  save_vocab(vocab, out);
  write_manifest(out, cfg, "train-tokenizer");
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(vocab.hash()));
  std::cout << "train-tokenizer: " << vocab.size() << " tokens, hash=" << hash << " -> " << out
            << '\n';
}

// ---- pretrain-{mlm,etc,electra} ----

template <typename T>
EncoderParams<double> run_stage(const TrainConfig& tc, const EncoderConfig& ecfg,
                                const LoadedCheckpoint* init, const LoadedCheckpoint* generator,
                                Stage stage, const std::vector<TokenSequence>& corpus,
                                std::ostream& log, PretrainResult& result) {
  EncoderParams<T> trained;
  if (stage == Stage::mlm) {
    if (init) {
      if (!init->params.heads.mlm) throw DataError("init checkpoint lacks mlm head");
      trained = cast_params<T>(init->params);
      TrainConfig cont = tc;
      cont.stage = Stage::mlm;
      result =
          run_pretrain(cont, trained, static_cast<const Generator<T>*>(nullptr), corpus, &log);
    } else {
      trained = pretrain_mlm<T>(tc, ecfg, corpus, &log, &result);
    }
  } else {
    const EncoderParams<T> gen = cast_params<T>(generator->params);
    trained = stage == Stage::etc ? pretrain_etc(tc, gen, corpus, &log, &result)
                                  : pretrain_electra(tc, gen, corpus, &log, &result);
  }
  return cast_params<double>(trained);
}

void run_pretrain_cmd(const CommandOpts& o, Stage stage) {
  Config cfg = resolve_config(o);
  const std::string corpus_path = cfg.str("corpus");
  const std::string vocab_path = cfg.str("vocab");
  const std::string out = cfg.str("out");
  const TrainConfig tc = resolve_train(cfg);

  const Vocabulary vocab = load_vocab(vocab_path);

  LoadedCheckpoint init, generator;
  const LoadedCheckpoint* init_p = nullptr;
  const LoadedCheckpoint* gen_p = nullptr;
  EncoderConfig ecfg;
  if (stage == Stage::mlm) {
    if (!tc.init_checkpoint.empty()) {
      init = load_checked(tc.init_checkpoint, vocab);
      init_p = &init;
      ecfg = init.params.cfg;
      stamp_encoder(cfg, ecfg);
    } else {
      ecfg = resolve_encoder(cfg, vocab.size());
    }
  } else {
    generator = load_checked(cfg.str("generator"), vocab);
    gen_p = &generator;
    ecfg = generator.params.cfg;
    stamp_encoder(cfg, ecfg);
  }

  const auto corpus = encode_corpus(load_corpus_text(corpus_path), vocab, ecfg.max_len);

  std::ofstream log_file(out + ".log");
  if (!log_file) throw DataError("cannot write log: " + out + ".log");
  TeeBuf tee(log_file.rdbuf(), std::cout.rdbuf());
  std::ostream log(&tee);

  PretrainResult result;
  const EncoderParams<double> params =
      tc.precision == Precision::f64
          ? run_stage<double>(tc, ecfg, init_p, gen_p, stage, corpus, log, result)
          : run_stage<float>(tc, ecfg, init_p, gen_p, stage, corpus, log, result);

  save_checkpoint(params, vocab.hash(), out);
  const char* command = stage == Stage::mlm    ? "pretrain-mlm"
                        : stage == Stage::etc ? "pretrain-etc"
                                              : "pretrain-electra";
  write_manifest(out, cfg, command);
  std::cout << command << ": " << tc.steps << " steps done, wasted=" << result.wasted << " -> "
            << out << '\n';
}

// ---- corrupt-dump ----

void run_corrupt_dump(const CommandOpts& o) {
  Config cfg = resolve_config(o);
  const std::string vocab_path = cfg.str("vocab");
  const std::string query = cfg.str("query");
  const std::string ckpt_path = resolve_str(cfg, "checkpoint", "");
  const double rate = resolve_real(cfg, "rate", 0.15);
  const std::uint64_t seed = resolve_seed(cfg, "seed", 1);
  const bool leading = resolve_flag(cfg, "leading_gap", false);
  const bool argmax = resolve_flag(cfg, "argmax", false);
  const double temperature = resolve_real(cfg, "temperature", 1.0);
  const std::string out = resolve_str(cfg, "out", "");

  const Vocabulary vocab = load_vocab(vocab_path);
  const TokenSequence x = encode(query, vocab);
  if (x.n() == 0) throw DataError("query produced no tokens");

  Generator<double> gen;
  bool has_gen = false;
  if (!ckpt_path.empty()) {
    gen.params = load_checked(ckpt_path, vocab).params;
    gen.fill_mode = argmax ? FillMode::argmax : FillMode::sample;
    gen.temperature = temperature;
    has_gen = true;
  }

  Rng rng(derive_seed(seed, "corrupt-dump", 0));
  EtcExample ex;
  if (leading) {
    // Pinned single insertion before the first token; with three input
    // tokens the label string reads 1000.
    GapMask m;
    m.m.assign(static_cast<std::size_t>(x.n()) + 1, 0);
    m.m[0] = 1;
    ex.m = m;
    ex.x_extend = build_etc_template(x, m);
    ex.y = build_etc_labels(ex.x_extend);
    ex.masked_positions = {0};
    if (has_gen) ex.x_extend = generator_fill(gen, ex.x_extend, rng);
  } else if (has_gen) {
    const FillFn fill = make_generator_fill(gen);
    ex = build_etc_example(x, rate, gen.params.cfg.max_len, fill, rng);
  } else {
    const GapMask m = sample_gap_positions(x.n(), rate, rng);
    ex.m = m;
    ex.x_extend = build_etc_template(x, m);
    ex.y = build_etc_labels(ex.x_extend);
    for (std::size_t i = 0; i < ex.x_extend.ids.size(); ++i)
      if (ex.x_extend.ids[i] == Vocabulary::kMaskId)
        ex.masked_positions.push_back(static_cast<int>(i));
  }

  const std::string record = format_corrupt_record(x, ex, vocab);
  std::cout << record << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw DataError("cannot write dump: " + out);
    f << record << '\n';
    write_manifest(out, cfg, "corrupt-dump");
  }
}

// ---- finetune ----

std::vector<double> parse_lr_grid(const std::string& text) {
  std::vector<double> grid;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      throw DataError("config key lr_grid expects comma-separated numbers, got \"" + text +
                      "\"");
    grid.push_back(v);
  }
  return grid;
}

void run_finetune(const CommandOpts& o) {
  Config cfg = resolve_config(o);
  const std::string ckpt_path = cfg.str("checkpoint");
  const std::string vocab_path = cfg.str("vocab");
  const std::string data_prefix = cfg.str("data");
  const std::string out = cfg.str("out");
  const std::string method = resolve_str(cfg, "method", "model");
  const double ratio = resolve_real(cfg, "ratio", 1.0);
  const long long seeds = resolve_int(cfg, "seeds", 5);
  const std::uint64_t base_seed = resolve_seed(cfg, "seed", 1);
  if (seeds < 1) throw DataError("seeds must be >= 1");

  FinetuneConfig fc;
  fc.lr_grid = parse_lr_grid(resolve_str(cfg, "lr_grid", "2e-5,5e-5,1e-4,2e-4"));
  fc.batch_size = static_cast<int>(resolve_int(cfg, "batch_size", 16));
  fc.epochs_ner = static_cast<int>(resolve_int(cfg, "epochs_ner", 10));
  fc.epochs_other = static_cast<int>(resolve_int(cfg, "epochs_other", 2));
  fc.epoch_multiplier = resolve_real(cfg, "epoch_multiplier", 1.0);
  fc.clip_norm = resolve_real(cfg, "clip_norm", 1.0);

  const Vocabulary vocab = load_vocab(vocab_path);
  const LoadedCheckpoint ckpt = load_checked(ckpt_path, vocab);
  LabeledDataset data = load_labeled_dataset(data_prefix, vocab, ckpt.params.cfg.max_len);
  if (ratio < 1.0) data = subsample(data, ratio, base_seed);

  std::ofstream log_file(out + ".log");
  if (!log_file) throw DataError("cannot write log: " + out + ".log");
  TeeBuf tee(log_file.rdbuf(), std::cout.rdbuf());
  std::ostream log(&tee);

  const std::string save_model = resolve_str(cfg, "save_model", "");

  std::vector<EvalReport> reports;
  for (long long i = 0; i < seeds; ++i) {
    fc.seed = derive_seed(base_seed, "finetune-seed", static_cast<std::uint64_t>(i));
    log << "seed " << i << " (" << fc.seed << ")\n";
    auto [model, report] = finetune(ckpt.params, data, fc, &log);
    reports.push_back(std::move(report));
    if (!save_model.empty() && i + 1 == seeds)
      save_checkpoint(model, vocab.hash(), save_model);
  }

  const ReportEntry entry = make_entry(method, ratio, reports);
  save_report(out, entry);
  write_manifest(out, cfg, "finetune");
  char value[32];
  std::snprintf(value, sizeof value, "%.4f", entry.value);
  std::cout << "finetune: method=" << method << " task=" << entry.task << " " << entry.metric
            << "=" << value << " over " << seeds << " seeds -> " << out << '\n';
}

// ---- evaluate ----

void run_evaluate(const CommandOpts& o) {
  Config cfg = resolve_config(o);
  const std::string ckpt_path = cfg.str("checkpoint");
  const std::string vocab_path = cfg.str("vocab");
  const std::string data_prefix = cfg.str("data");
  const std::string split = resolve_str(cfg, "split", "test");
  const std::string out = resolve_str(cfg, "out", "");
  const std::string method = resolve_str(cfg, "method", "model");
  const double ratio = resolve_real(cfg, "ratio", 1.0);
  const int batch_size = static_cast<int>(resolve_int(cfg, "batch_size", 16));

  const Vocabulary vocab = load_vocab(vocab_path);
  const LoadedCheckpoint ckpt = load_checked(ckpt_path, vocab);
  const LabeledDataset data = load_labeled_dataset(data_prefix, vocab, ckpt.params.cfg.max_len);

  const EvalReport report = evaluate_model(ckpt.params, data, split, batch_size);
  char value[32];
  std::snprintf(value, sizeof value, "%.6f", report.value);
  std::cout << "evaluate: task=" << report.task << " split=" << split << " " << report.metric
            << "=" << value << " support=" << report.support << '\n';
  if (!out.empty()) {
    save_report(out, make_entry(method, ratio, {report}));
    write_manifest(out, cfg, "evaluate");
  }
}

// ---- report ----

void run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<ReportEntry> entries;
  for (const std::string& path : inputs) entries.push_back(load_report(path));

  bool any_full = false;
  for (const ReportEntry& e : entries) any_full |= e.ratio == 1.0;

  std::string text;
  if (any_full) text += "== full-data comparison ==\n" + method_table(entries) + '\n';
  text += "== few-shot grid ==\n" + fewshot_table(entries);
  std::cout << text;

  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw DataError("cannot write report: " + out);
    f << text;
    Config cfg;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      cfg.set("input" + std::to_string(i), inputs[i]);
    cfg.set("out", out);
    write_manifest(out, cfg, "report");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"etclab: insertion-based pre-training lab for short text"};
  app.require_subcommand(1);

  CommandOpts gen_o, tok_o, mlm_o, etc_o, electra_o, dump_o, ft_o, eval_o;
  std::vector<std::string> report_inputs;
  std::string report_out;

  auto* gen = app.add_subcommand("gen-corpus", "Sample a query corpus from a grammar");
  add_common(gen, gen_o);
  add_key(gen, gen_o, "--grammar", "grammar", "grammar definition file");
  add_key(gen, gen_o, "--out", "out", "output corpus path");
  add_key(gen, gen_o, "--count", "count", "queries to sample (default 50000)");
  add_key(gen, gen_o, "--seed", "seed", "sampling seed (default 1)");
  add_key(gen, gen_o, "--task", "task", "emit labeled splits for ner, binary_cls, or spell");
  add_key(gen, gen_o, "--vocab", "vocab", "vocabulary file (labeled mode)");
  add_key(gen, gen_o, "--train", "train", "labeled train examples (default 500)");
  add_key(gen, gen_o, "--dev", "dev", "labeled dev examples (default 100)");
  add_key(gen, gen_o, "--test", "test", "labeled test examples (default 100)");
  gen->callback([&] { run_gen_corpus(gen_o); });

  auto* tok = app.add_subcommand("train-tokenizer", "Learn a subword vocabulary from a corpus");
  add_common(tok, tok_o);
  add_key(tok, tok_o, "--corpus", "corpus", "training corpus, one query per line");
  add_key(tok, tok_o, "--out", "out", "output vocabulary path");
  add_key(tok, tok_o, "--vocab-size", "vocab_size", "target vocabulary size (default 512)");
  add_key(tok, tok_o, "--min-freq", "min_freq", "frequency floor for merges (default 2)");
  tok->callback([&] { run_train_tokenizer(tok_o); });

  const auto add_train_keys = [](CLI::App* sc, CommandOpts& o) {
    add_key(sc, o, "--corpus", "corpus", "pre-training corpus");
    add_key(sc, o, "--vocab", "vocab", "vocabulary file");
    add_key(sc, o, "--out", "out", "output checkpoint path");
    add_key(sc, o, "--steps", "steps", "optimizer steps (default 10000)");
    add_key(sc, o, "--batch-size", "batch_size", "sequences per step (default 32)");
    add_key(sc, o, "--lr", "lr", "peak learning rate (default 1e-4)");
    add_key(sc, o, "--rate", "rate", "gap probability or mask rate (default 0.15)");
    add_key(sc, o, "--seed", "seed", "training seed (default 1)");
    add_key(sc, o, "--precision", "precision", "f32 or f64 (default f64)");
    add_key(sc, o, "--eval-every", "eval_every", "log cadence in steps (default 100)");
  };

  auto* mlm = app.add_subcommand("pretrain-mlm", "Stage-1 masked-LM pre-training");
  add_common(mlm, mlm_o);
  add_train_keys(mlm, mlm_o);
  add_key(mlm, mlm_o, "--init-checkpoint", "init_checkpoint",
          "continue from this checkpoint instead of random init");
  mlm->callback([&] { run_pretrain_cmd(mlm_o, Stage::mlm); });

  auto* etc = app.add_subcommand("pretrain-etc", "Stage-2 insertion-detection pre-training");
  add_common(etc, etc_o);
  add_train_keys(etc, etc_o);
  add_key(etc, etc_o, "--generator", "generator", "frozen masked-LM checkpoint");
  etc->callback([&] { run_pretrain_cmd(etc_o, Stage::etc); });

  auto* electra =
      app.add_subcommand("pretrain-electra", "Stage-2 replaced-token-detection pre-training");
  add_common(electra, electra_o);
  add_train_keys(electra, electra_o);
  add_key(electra, electra_o, "--generator", "generator", "frozen masked-LM checkpoint");
  electra->callback([&] { run_pretrain_cmd(electra_o, Stage::electra); });

  auto* dump = app.add_subcommand("corrupt-dump", "Show the extension of one query");
  add_common(dump, dump_o);
  add_key(dump, dump_o, "--vocab", "vocab", "vocabulary file");
  add_key(dump, dump_o, "--query", "query", "query text to extend");
  add_key(dump, dump_o, "--checkpoint", "checkpoint", "generator checkpoint for mask filling");
  add_key(dump, dump_o, "--rate", "rate", "gap probability (default 0.15)");
  add_key(dump, dump_o, "--seed", "seed", "sampling seed (default 1)");
  add_key(dump, dump_o, "--leading-gap", "leading_gap",
          "force a single insertion before the first token (true/false)");
  add_key(dump, dump_o, "--argmax", "argmax", "fill with argmax instead of sampling");
  add_key(dump, dump_o, "--temperature", "temperature", "sampling temperature (default 1)");
  add_key(dump, dump_o, "--out", "out", "also write the record to this file");
  dump->callback([&] { run_corrupt_dump(dump_o); });

  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint on a labeled dataset");
  add_common(ft, ft_o);
  add_key(ft, ft_o, "--checkpoint", "checkpoint", "pre-trained checkpoint");
  add_key(ft, ft_o, "--vocab", "vocab", "vocabulary file");
  add_key(ft, ft_o, "--data", "data", "labeled dataset path prefix");
  add_key(ft, ft_o, "--out", "out", "output report path (JSON)");
  add_key(ft, ft_o, "--method", "method", "method label for report aggregation");
  add_key(ft, ft_o, "--ratio", "ratio", "labeled-data fraction to use (default 1.0)");
  add_key(ft, ft_o, "--seeds", "seeds", "number of fine-tuning seeds (default 5)");
  add_key(ft, ft_o, "--seed", "seed", "base seed (default 1)");
  add_key(ft, ft_o, "--lr-grid", "lr_grid", "comma-separated dev-selection grid");
  add_key(ft, ft_o, "--batch-size", "batch_size", "fine-tuning batch size (default 16)");
  add_key(ft, ft_o, "--epoch-multiplier", "epoch_multiplier", "scales task epochs (default 1)");
  add_key(ft, ft_o, "--save-model", "save_model",
          "write the last seed's fine-tuned checkpoint here");
  ft->callback([&] { run_finetune(ft_o); });

  auto* ev = app.add_subcommand("evaluate", "Evaluate a fine-tuned checkpoint on a split");
  add_common(ev, eval_o);
  add_key(ev, eval_o, "--checkpoint", "checkpoint", "fine-tuned checkpoint");
  add_key(ev, eval_o, "--vocab", "vocab", "vocabulary file");
  add_key(ev, eval_o, "--data", "data", "labeled dataset path prefix");
  add_key(ev, eval_o, "--split", "split", "train, dev, or test (default test)");
  add_key(ev, eval_o, "--out", "out", "optional report path (JSON)");
  add_key(ev, eval_o, "--method", "method", "method label for the report");
  ev->callback([&] { run_evaluate(eval_o); });

  auto* rep = app.add_subcommand("report", "Aggregate stored reports into comparison tables");
  rep->add_option("inputs", report_inputs, "report JSON files")->required()->expected(-1);
  rep->add_option("--out", report_out, "also write the tables to this file");
  rep->callback([&] { run_report(report_inputs, report_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
