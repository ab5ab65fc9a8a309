#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "etclab/checkpoint.hpp"
#include "etclab/corruption.hpp"
#include "etclab/encoder.hpp"
#include "etclab/errors.hpp"
#include "etclab/graph.hpp"
#include "etclab/optimizer.hpp"
#include "etclab/rng.hpp"
#include "etclab/tokenizer.hpp"

namespace etclab {

enum class FillMode { sample, argmax };

// Frozen masked-LM used to fill inserted masks. Inference only: the fill
// graph binds its parameters without gradients and runs with dropout off.
template <typename T>
struct Generator {
  EncoderParams<T> params;
  FillMode fill_mode = FillMode::sample;
  double temperature = 1.0;
};

namespace pretrain_detail {

// One id per requested position, drawn from the generator's output
// distribution at that position. Pad, cls, and mask ids are excluded from
// the candidate set; unk stays eligible. Argmax ties resolve to the lowest
// id so both modes are deterministic under a fixed seed.
template <typename T>
std::vector<std::int32_t> fill_ids(const Generator<T>& gen, const std::vector<std::int32_t>& ids,
                                   const std::vector<int>& positions, Rng& rng) {
  if (!gen.params.heads.mlm) throw DataError("generator lacks mlm head");
  if (positions.empty()) return {};
  if (gen.temperature <= 0) throw DataError("generator temperature must be positive");

  Graph<T> g;
  const BoundParams<T> bp = bind_params(g, gen.params, /*trainable=*/false);
  Batch batch = make_batch({ids}, Vocabulary::kPadId);
  auto hidden = encoder_forward(g, bp, batch, /*dropout_rate=*/0.0, rng);
  const Tensor<T>& logits = g.value(head_forward(g, bp, hidden, Head::mlm));

  const int v = gen.params.cfg.vocab_size;
  const auto allowed = [](int id) {
    return id != Vocabulary::kPadId && id != Vocabulary::kClsId && id != Vocabulary::kMaskId;
  };

  std::vector<std::int32_t> out;
  out.reserve(positions.size());
  for (const int pos : positions) {
    if (pos < 0 || pos >= static_cast<int>(ids.size()))
      throw DataError("fill position " + std::to_string(pos) + " outside sequence");
    const T* row = logits.data.data() + static_cast<std::size_t>(pos) * v;

    if (gen.fill_mode == FillMode::argmax) {
      int best = -1;
      double best_logit = 0;
      for (int i = 0; i < v; ++i) {
        if (!allowed(i)) continue;
        const double x = static_cast<double>(row[i]);
        if (best < 0 || x > best_logit) {
          best = i;
          best_logit = x;
        }
      }
      out.push_back(best);
      continue;
    }

    double mx = 0;
    bool seen = false;
    for (int i = 0; i < v; ++i)
      if (allowed(i)) {
        const double x = static_cast<double>(row[i]);
        if (!seen || x > mx) mx = x;
        seen = true;
      }
    double total = 0;
    for (int i = 0; i < v; ++i)
      if (allowed(i)) total += std::exp((static_cast<double>(row[i]) - mx) / gen.temperature);
    const double target = rng.uniform() * total;
    double acc = 0;
    int pick = -1;
    for (int i = 0; i < v; ++i) {
      if (!allowed(i)) continue;
      acc += std::exp((static_cast<double>(row[i]) - mx) / gen.temperature);
      pick = i;
      if (acc > target) break;
    }
    out.push_back(pick);
  }
  return out;
}

}  // namespace pretrain_detail

// Replaces every mask token in x_temp with a generator draw. Sequences with
// no masks come back unchanged without running the model.
template <typename T>
TokenSequence generator_fill(const Generator<T>& gen, const TokenSequence& x_temp, Rng& rng) {
  if (!gen.params.heads.mlm) throw DataError("generator lacks mlm head");
  std::vector<int> positions;
  for (std::size_t i = 0; i < x_temp.ids.size(); ++i)
    if (x_temp.ids[i] == Vocabulary::kMaskId) positions.push_back(static_cast<int>(i));
  if (positions.empty()) return x_temp;
  const auto fills = pretrain_detail::fill_ids(gen, x_temp.ids, positions, rng);
  TokenSequence out = x_temp;
  for (std::size_t k = 0; k < positions.size(); ++k)
    out.ids[static_cast<std::size_t>(positions[k])] = fills[k];
  return out;
}

// Adapter for the corruption builders. The generator must outlive the
// returned callable.
template <typename T>
FillFn make_generator_fill(const Generator<T>& gen) {
  return [&gen](const TokenSequence& corrupted, const std::vector<int>& positions, Rng& rng) {
    return pretrain_detail::fill_ids(gen, corrupted.ids, positions, rng);
  };
}

// Discriminator objective: BCE over every position with pos_mask=1, averaged
// per contributing position. Padding is excluded by the mask, inserted and
// original positions both contribute.
template <typename T>
typename Graph<T>::Var disc_loss(Graph<T>& g, typename Graph<T>::Var d_probs,
                                 const std::vector<std::uint8_t>& y,
                                 const std::vector<std::uint8_t>& pos_mask,
                                 BceStats* stats = nullptr) {
  return g.binary_cross_entropy(d_probs, y, pos_mask, stats);
}

// Masked-LM objective: cross-entropy averaged over masked positions only. A
// batch with no masked positions yields loss 0 and a zero gradient.
template <typename T>
typename Graph<T>::Var mlm_loss(Graph<T>& g, typename Graph<T>::Var logits,
                                const std::vector<std::int32_t>& targets,
                                const std::vector<std::uint8_t>& mask_positions) {
  return g.cross_entropy(logits, targets, mask_positions);
}

enum class Stage { mlm, etc, electra };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::mlm: return "mlm";
    case Stage::etc: return "etc";
    case Stage::electra: return "electra";
  }
  return "?";
}

enum class Precision { f32, f64 };

struct TrainConfig {
  Stage stage = Stage::mlm;
  long long steps = 0;
  int batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double p_or_rate = 0.15;     // gap probability (etc) or mask rate (mlm/electra)
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  std::string init_checkpoint;  // consumed by the CLI, not the loop
  long long eval_every = 100;
  double clip_norm = 1.0;       // <= 0 disables clipping

  void validate() const {
    if (!(lr > 0)) throw DataError("lr must be positive");
    if (p_or_rate < 0 || p_or_rate > 1) throw DataError("p_or_rate must be in [0,1]");
    if (steps < 0) throw DataError("steps must be >= 0");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (eval_every < 1) throw DataError("eval_every must be >= 1");
  }
};

struct PretrainResult {
  std::vector<double> losses;  // one entry per optimizer step
  long long wasted = 0;        // mlm queries that drew zero mask positions
  long long clamped = 0;       // BCE probability clamps across the run
};

// Trains `params` in place for tc.steps optimizer steps. Each step draws its
// own rng stream from (seed, "step", index), so runs are reproducible and a
// rerun with the same config gives bit-identical loss values. ETC/ELECTRA
// stages read the generator for mask filling; it receives no gradients.
template <typename T>
PretrainResult run_pretrain(const TrainConfig& tc, EncoderParams<T>& params,
                            const Generator<T>* gen, const std::vector<TokenSequence>& corpus,
                            std::ostream* log) {
  tc.validate();
  if (corpus.empty()) throw DataError("empty corpus");
  if (tc.stage != Stage::mlm && gen == nullptr)
    throw std::logic_error("etc/electra stages need a generator");
  const int max_len = params.cfg.max_len;

  RAdamConfig opt;
  opt.lr = tc.lr;
  opt.beta1 = tc.beta1;
  opt.beta2 = tc.beta2;
  opt.weight_decay = tc.weight_decay;
  OptState<T> state = init_opt_state(params);

  FillFn fill;
  if (gen) fill = make_generator_fill(*gen);

  PretrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  for (long long step = 0; step < tc.steps; ++step) {
    Rng rng(derive_seed(tc.seed, "step", static_cast<std::uint64_t>(step)));

    std::vector<std::vector<std::int32_t>> rows;
    std::vector<std::vector<std::uint8_t>> row_labels;   // etc/electra
    std::vector<std::vector<std::int32_t>> row_targets;  // mlm
    std::vector<std::vector<std::uint8_t>> row_mask;     // mlm loss positions
    rows.reserve(static_cast<std::size_t>(tc.batch_size));
    for (int i = 0; i < tc.batch_size; ++i) {
      const TokenSequence& q = corpus[rng.uniform_int(corpus.size())];
      switch (tc.stage) {
        case Stage::mlm: {
          MlmExample ex = build_mlm_example(q, tc.p_or_rate, rng);
          bool any = false;
          for (const auto b : ex.mask_positions) any |= b != 0;
          if (!any) ++result.wasted;
          rows.push_back(std::move(ex.x_mask.ids));
          row_targets.push_back(std::move(ex.targets));
          row_mask.push_back(std::move(ex.mask_positions));
          break;
        }
        case Stage::etc: {
          EtcExample ex = build_etc_example(q, tc.p_or_rate, max_len, fill, rng);
          rows.push_back(std::move(ex.x_extend.ids));
          row_labels.push_back(std::move(ex.y));
          break;
        }
        case Stage::electra: {
          ElectraExample ex = build_electra_example(q, tc.p_or_rate, fill, rng);
          rows.push_back(std::move(ex.x_replace.ids));
          row_labels.push_back(std::move(ex.y));
          break;
        }
      }
    }

    Batch batch = make_batch(rows, Vocabulary::kPadId);
    const std::size_t flat = static_cast<std::size_t>(batch.b) * batch.l;

    Graph<T> g;
    const BoundParams<T> bp = bind_params(g, params, /*trainable=*/true);
    auto hidden = encoder_forward(g, bp, batch, params.cfg.dropout, rng);

    typename Graph<T>::Var loss;
    if (tc.stage == Stage::mlm) {
      std::vector<std::int32_t> targets(flat, 0);
      std::vector<std::uint8_t> mask(flat, 0);
      for (int r = 0; r < batch.b; ++r)
        for (std::size_t t = 0; t < row_targets[static_cast<std::size_t>(r)].size(); ++t) {
          const std::size_t at = static_cast<std::size_t>(r) * batch.l + t;
          targets[at] = row_targets[static_cast<std::size_t>(r)][t];
          mask[at] = row_mask[static_cast<std::size_t>(r)][t];
        }
      loss = mlm_loss(g, head_forward(g, bp, hidden, Head::mlm), targets, mask);
    } else {
      std::vector<std::uint8_t> y(flat, 0);
      for (int r = 0; r < batch.b; ++r)
        for (std::size_t t = 0; t < row_labels[static_cast<std::size_t>(r)].size(); ++t)
          y[static_cast<std::size_t>(r) * batch.l + t] = row_labels[static_cast<std::size_t>(r)][t];
      BceStats stats;
      loss = disc_loss(g, head_forward(g, bp, hidden, Head::disc), y, batch.flat_mask(), &stats);
      result.clamped += stats.clamped;
    }

    const double loss_val = static_cast<double>(g.value(loss)[0]);
    if (!std::isfinite(loss_val))
      throw DivergenceError("divergence: non-finite loss at step " + std::to_string(step + 1));
    result.losses.push_back(loss_val);

    g.backward(loss);
    std::vector<Tensor<T>> grads;
    grads.reserve(bp.named.size());
    for (const auto& [name, var] : bp.named) grads.push_back(g.grad(var));
    clip_global_norm(grads, tc.clip_norm);

    const double lr_now = cosine_lr(step, tc.steps, tc.lr);
    radam_step(params, grads, state, opt, lr_now);

    if (log && ((step + 1) % tc.eval_every == 0 || step + 1 == tc.steps)) {
      const auto wall =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
              .count();
      char line[256];
      std::snprintf(line, sizeof line, "step=%lld stage=%s loss=%.17g lr=%.17g wasted=%lld wall_ms=%lld",
                    step + 1, stage_name(tc.stage), loss_val, lr_now, result.wasted,
                    static_cast<long long>(wall));
      *log << line << '\n';
    }
  }
  return result;
}

// Stage 1: masked-LM pre-training from random initialization.
template <typename T>
EncoderParams<T> pretrain_mlm(const TrainConfig& tc, const EncoderConfig& ecfg,
                              const std::vector<TokenSequence>& corpus, std::ostream* log,
                              PretrainResult* result = nullptr) {
  TrainConfig cfg = tc;
  cfg.stage = Stage::mlm;
  HeadSpec heads;
  heads.mlm = true;
  EncoderParams<T> params = init_params<T>(ecfg, heads, cfg.seed);
  PretrainResult r = run_pretrain(cfg, params, static_cast<const Generator<T>*>(nullptr), corpus, log);
  if (result) *result = std::move(r);
  return params;
}

namespace pretrain_detail {

// Discriminator start state shared by the ETC and ELECTRA stages: encoder
// body copied from the generator, disc head present and zeroed so the first
// forward emits probability 0.5 everywhere.
template <typename T>
EncoderParams<T> disc_init(const EncoderParams<T>& generator_params, std::uint64_t seed) {
  if (!generator_params.heads.mlm) throw DataError("generator lacks mlm head");
  HeadSpec want;
  want.disc = true;
  EncoderParams<T> d = adapt_heads(generator_params, want, seed);
  d.disc_w = Tensor<T>(d.disc_w.shape);
  d.disc_b = Tensor<T>(d.disc_b.shape);
  return d;
}

}  // namespace pretrain_detail

// Stage 2, insertion variant. The generator object is local and const; the
// caller's parameters are never aliased, so its weights cannot drift.
template <typename T>
EncoderParams<T> pretrain_etc(const TrainConfig& tc, const EncoderParams<T>& generator_params,
                              const std::vector<TokenSequence>& corpus, std::ostream* log,
                              PretrainResult* result = nullptr) {
  TrainConfig cfg = tc;
  cfg.stage = Stage::etc;
  EncoderParams<T> disc = pretrain_detail::disc_init(generator_params, cfg.seed);
  const Generator<T> gen{generator_params, FillMode::sample, 1.0};
  PretrainResult r = run_pretrain(cfg, disc, &gen, corpus, log);
  if (result) *result = std::move(r);
  return disc;
}

// Stage 2, replacement variant on the identical harness.
template <typename T>
EncoderParams<T> pretrain_electra(const TrainConfig& tc, const EncoderParams<T>& generator_params,
                                  const std::vector<TokenSequence>& corpus, std::ostream* log,
                                  PretrainResult* result = nullptr) {
  TrainConfig cfg = tc;
  cfg.stage = Stage::electra;
  EncoderParams<T> disc = pretrain_detail::disc_init(generator_params, cfg.seed);
  const Generator<T> gen{generator_params, FillMode::sample, 1.0};
  PretrainResult r = run_pretrain(cfg, disc, &gen, corpus, log);
  if (result) *result = std::move(r);
  return disc;
}

}  // namespace etclab
