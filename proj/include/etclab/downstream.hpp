#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "etclab/checkpoint.hpp"
#include "etclab/dataset.hpp"
#include "etclab/encoder.hpp"
#include "etclab/errors.hpp"
#include "etclab/graph.hpp"
#include "etclab/metrics.hpp"
#include "etclab/optimizer.hpp"
#include "etclab/rng.hpp"

namespace etclab {

struct FinetuneConfig {
  std::vector<double> lr_grid = {2e-5, 5e-5, 1e-4, 2e-4};
  int batch_size = 16;
  int epochs_ner = 10;
  int epochs_other = 2;
  double epoch_multiplier = 1.0;  // desk-scale stretch; applied before rounding
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (lr_grid.empty()) throw DataError("lr grid is empty");
    for (const double lr : lr_grid)
      if (!(lr > 0)) throw DataError("lr grid entries must be positive");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (epochs_ner < 1 || epochs_other < 1) throw DataError("epochs must be >= 1");
    if (!(epoch_multiplier > 0)) throw DataError("epoch multiplier must be positive");
  }
};

struct EvalReport {
  std::string task;
  std::string metric;
  double value = 0;
  std::vector<double> per_seed;
  long long support = 0;
};

inline const char* metric_name(Task t) {
  switch (t) {
    case Task::ner: return "span_f1";
    case Task::binary_cls: return "binary_f1";
    case Task::spell: return "exact_match";
  }
  return "?";
}

namespace downstream_detail {

inline HeadSpec head_for(Task task, const LabeledDataset& data) {
  HeadSpec h;
  switch (task) {
    case Task::ner:
      h.token_cls = static_cast<int>(data.tag_names.size());
      if (h.token_cls < 2) throw DataError("ner dataset needs a tag table");
      break;
    case Task::binary_cls:
      h.seq_cls = 2;
      break;
    case Task::spell:
      h.vocab = true;
      break;
  }
  return h;
}

// Sequence classification pools the first position, so those inputs get a
// leading cls token; token-level tasks keep the raw query row.
inline std::vector<std::int32_t> input_row(const LabeledExample& ex, Task task, int max_len) {
  std::vector<std::int32_t> row;
  if (task == Task::binary_cls) {
    row.push_back(Vocabulary::kClsId);
    row.insert(row.end(), ex.x.ids.begin(), ex.x.ids.end());
    if (static_cast<int>(row.size()) > max_len) row.resize(static_cast<std::size_t>(max_len));
  } else {
    row = ex.x.ids;
  }
  return row;
}

template <typename T>
struct EvalOutcome {
  double value = 0;
  long long support = 0;
};

// Greedy decode of the task head over one split. Dropout off; prediction is
// a pure function of the parameters.
template <typename T>
EvalOutcome<T> evaluate_split(const EncoderParams<T>& params,
                              const std::vector<LabeledExample>& split, Task task,
                              const std::vector<std::string>& tag_names, int batch_size) {
  if (split.empty()) throw DataError("empty split");
  const int max_len = params.cfg.max_len;
  Rng unused(0);

  std::vector<std::vector<int>> pred_tags, gold_tags;
  std::vector<int> pred_cls, gold_cls;
  std::vector<std::vector<std::int32_t>> pred_seq, gold_seq;

  for (std::size_t at = 0; at < split.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(split.size(), at + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<std::int32_t>> rows;
    for (std::size_t i = at; i < hi; ++i) rows.push_back(input_row(split[i], task, max_len));
    Batch batch = make_batch(rows, Vocabulary::kPadId);

    Graph<T> g;
    const BoundParams<T> bp = bind_params(g, params, /*trainable=*/false);
    auto hidden = encoder_forward(g, bp, batch, /*dropout_rate=*/0.0, unused);

    switch (task) {
      case Task::ner: {
        const Tensor<T>& logits = g.value(head_forward(g, bp, hidden, Head::token_cls));
        const int tags = logits.shape.back();
        for (std::size_t i = at; i < hi; ++i) {
          const int n = split[i].x.n();
          std::vector<int> row;
          for (int t = 0; t < n; ++t) {
            const T* x =
                logits.data.data() + ((i - at) * static_cast<std::size_t>(batch.l) + t) * tags;
            row.push_back(static_cast<int>(std::max_element(x, x + tags) - x));
          }
          pred_tags.push_back(std::move(row));
          gold_tags.push_back(split[i].tags);
        }
        break;
      }
      case Task::binary_cls: {
        const Tensor<T>& logits = g.value(head_forward(g, bp, hidden, Head::seq_cls));
        for (std::size_t i = at; i < hi; ++i) {
          const T* x = logits.data.data() + (i - at) * 2;
          pred_cls.push_back(x[1] > x[0] ? 1 : 0);
          gold_cls.push_back(split[i].label);
        }
        break;
      }
      case Task::spell: {
        const Tensor<T>& logits = g.value(head_forward(g, bp, hidden, Head::vocab));
        const int v = logits.shape.back();
        for (std::size_t i = at; i < hi; ++i) {
          const int n = split[i].x.n();
          std::vector<std::int32_t> row;
          for (int t = 0; t < n; ++t) {
            const T* x =
                logits.data.data() + ((i - at) * static_cast<std::size_t>(batch.l) + t) * v;
            row.push_back(static_cast<std::int32_t>(std::max_element(x, x + v) - x));
          }
          pred_seq.push_back(std::move(row));
          gold_seq.push_back(split[i].target.ids);
        }
        break;
      }
    }
  }

  EvalOutcome<T> out;
  out.support = static_cast<long long>(split.size());
  switch (task) {
    case Task::ner:
      out.value = span_f1(pred_tags, gold_tags, TagScheme::from_names(tag_names)).f1;
      break;
    case Task::binary_cls:
      out.value = binary_f1(pred_cls, gold_cls);
      break;
    case Task::spell:
      out.value = exact_match_accuracy(pred_seq, gold_seq);
      break;
  }
  return out;
}

// One training pass at a fixed learning rate. Fine-tuning runs without
// weight decay; the schedule restarts over this trial's own step budget.
template <typename T>
void train_trial(EncoderParams<T>& params, const std::vector<LabeledExample>& train, Task task,
                 const FinetuneConfig& cfg, double lr, int epochs, Rng& rng) {
  if (train.empty()) return;
  const int max_len = params.cfg.max_len;

  RAdamConfig opt;
  opt.lr = lr;
  opt.weight_decay = 0.0;
  OptState<T> state = init_opt_state(params);

  const long long batches_per_epoch =
      static_cast<long long>((train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                             static_cast<std::size_t>(cfg.batch_size));
  const long long total_steps = batches_per_epoch * epochs;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);

    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<std::int32_t>> rows;
      for (std::size_t i = at; i < hi; ++i)
        rows.push_back(input_row(train[order[i]], task, max_len));
      Batch batch = make_batch(rows, Vocabulary::kPadId);
      const std::size_t flat = static_cast<std::size_t>(batch.b) * batch.l;

      Graph<T> g;
      const BoundParams<T> bp = bind_params(g, params, /*trainable=*/true);
      auto hidden = encoder_forward(g, bp, batch, params.cfg.dropout, rng);

      typename Graph<T>::Var loss;
      switch (task) {
        case Task::ner: {
          std::vector<std::int32_t> targets(flat, 0);
          std::vector<std::uint8_t> mask(flat, 0);
          for (std::size_t i = at; i < hi; ++i) {
            const LabeledExample& ex = train[order[i]];
            for (std::size_t t = 0; t < ex.tags.size(); ++t) {
              const std::size_t slot = (i - at) * static_cast<std::size_t>(batch.l) + t;
              targets[slot] = ex.tags[t];
              mask[slot] = 1;
            }
          }
          loss = g.cross_entropy(head_forward(g, bp, hidden, Head::token_cls), targets, mask);
          break;
        }
        case Task::binary_cls: {
          std::vector<std::int32_t> targets;
          for (std::size_t i = at; i < hi; ++i)
            targets.push_back(train[order[i]].label);
          loss = g.cross_entropy(head_forward(g, bp, hidden, Head::seq_cls), targets,
                                 std::vector<std::uint8_t>(targets.size(), 1));
          break;
        }
        case Task::spell: {
          std::vector<std::int32_t> targets(flat, 0);
          std::vector<std::uint8_t> mask(flat, 0);
          for (std::size_t i = at; i < hi; ++i) {
            const LabeledExample& ex = train[order[i]];
            for (std::size_t t = 0; t < ex.target.ids.size(); ++t) {
              const std::size_t slot = (i - at) * static_cast<std::size_t>(batch.l) + t;
              targets[slot] = ex.target.ids[t];
              mask[slot] = 1;
            }
          }
          loss = g.cross_entropy(head_forward(g, bp, hidden, Head::vocab), targets, mask);
          break;
        }
      }

      if (!std::isfinite(static_cast<double>(g.value(loss)[0])))
        throw DivergenceError("divergence: non-finite loss in fine-tuning step " +
                              std::to_string(step + 1));
      g.backward(loss);
      std::vector<Tensor<T>> grads;
      grads.reserve(bp.named.size());
      for (const auto& [name, var] : bp.named) grads.push_back(g.grad(var));
      clip_global_norm(grads, cfg.clip_norm);
      radam_step(params, grads, state, opt, cosine_lr(step, total_steps, lr));
      ++step;
    }
  }
}

}  // namespace downstream_detail

// Fine-tunes a fresh head per grid entry, selects the learning rate on the
// dev split (ties break toward the smaller rate), and reports the selected
// model's test-split metric. The base parameters are read-only.
template <typename T>
std::pair<EncoderParams<T>, EvalReport> finetune(const EncoderParams<T>& base,
                                                 const LabeledDataset& data,
                                                 const FinetuneConfig& cfg,
                                                 std::ostream* log = nullptr) {
  cfg.validate();
  if (data.dev.empty()) throw DataError("dev split is empty");
  if (data.test.empty()) throw DataError("empty split");
  std::vector<double> grid = cfg.lr_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const HeadSpec want = downstream_detail::head_for(data.task, data);
  const int epochs = std::max(
      1, static_cast<int>(std::lround(
             cfg.epoch_multiplier * (data.task == Task::ner ? cfg.epochs_ner : cfg.epochs_other))));

  if (data.train.empty() && log)
    *log << "warning: no training examples, reporting the untrained head\n";

  EncoderParams<T> best;
  double best_dev = -1;
  double best_lr = 0;
  for (std::size_t li = 0; li < grid.size(); ++li) {
    const double lr = grid[li];
    EncoderParams<T> trial =
        adapt_heads(base, want, derive_seed(cfg.seed, "finetune-head", li));
    Rng rng(derive_seed(cfg.seed, "finetune-train", li));
    downstream_detail::train_trial(trial, data.train, data.task, cfg, lr, epochs, rng);
    const auto dev = downstream_detail::evaluate_split(trial, data.dev, data.task,
                                                       data.tag_names, cfg.batch_size);
    if (log)
      *log << "finetune lr=" << lr << " dev_" << metric_name(data.task) << "=" << dev.value
           << '\n';
    if (dev.value > best_dev) {
      best_dev = dev.value;
      best_lr = lr;
      best = std::move(trial);
    }
  }

  const auto test = downstream_detail::evaluate_split(best, data.test, data.task,
                                                      data.tag_names, cfg.batch_size);
  if (log)
    *log << "finetune selected lr=" << best_lr << " test_" << metric_name(data.task) << "="
         << test.value << '\n';

  EvalReport report;
  report.task = task_name(data.task);
  report.metric = metric_name(data.task);
  report.value = test.value;
  report.per_seed = {test.value};
  report.support = test.support;
  return {std::move(best), report};
}

// Evaluates an already fine-tuned model on one split by name, without any
// training. The checkpoint must carry the task's head.
template <typename T>
EvalReport evaluate_model(const EncoderParams<T>& params, const LabeledDataset& data,
                          const std::string& split_name, int batch_size = 16) {
  const std::vector<LabeledExample>* split = nullptr;
  if (split_name == "train") split = &data.train;
  else if (split_name == "dev") split = &data.dev;
  else if (split_name == "test") split = &data.test;
  else throw DataError("unknown split: " + split_name);

  bool head_ok = false;
  switch (data.task) {
    case Task::ner:
      head_ok = params.heads.token_cls == static_cast<int>(data.tag_names.size()) &&
                params.heads.token_cls > 0;
      break;
    case Task::binary_cls: head_ok = params.heads.seq_cls == 2; break;
    case Task::spell: head_ok = params.heads.vocab; break;
  }
  if (!head_ok)
    throw DataError(std::string("checkpoint lacks the ") + task_name(data.task) + " head");

  const auto out =
      downstream_detail::evaluate_split(params, *split, data.task, data.tag_names, batch_size);
  EvalReport report;
  report.task = task_name(data.task);
  report.metric = metric_name(data.task);
  report.value = out.value;
  report.per_seed = {out.value};
  report.support = out.support;
  return report;
}

// Uniform without-replacement subsample of the training split; dev and test
// pass through. A shared seed nests the subsets: the ratio-r selection is a
// prefix of the ratio-1 ordering.
inline LabeledDataset subsample(const LabeledDataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0) || ratio > 1) throw DataError("subsample ratio must be in (0,1]");
  const std::size_t n = data.train.size();
  const std::size_t take = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(n)));
  if (take == 0) throw DataError("subsample would select zero examples");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "subsample", 0));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  order.resize(take);
  std::sort(order.begin(), order.end());

  LabeledDataset out;
  out.task = data.task;
  out.tag_names = data.tag_names;
  out.vocab_hash = data.vocab_hash;
  for (const std::size_t i : order) out.train.push_back(data.train[i]);
  out.dev = data.dev;
  out.test = data.test;
  return out;
}

// Majority-tag floor: the most frequent train tag predicted at every test
// position. The reference point for the pre-training comparisons.
inline double majority_baseline(const LabeledDataset& data) {
  if (data.task != Task::ner) throw DataError("majority baseline is defined for ner");
  if (data.train.empty() || data.test.empty()) throw DataError("empty split");
  std::vector<long long> counts(data.tag_names.size(), 0);
  for (const LabeledExample& ex : data.train)
    for (const int t : ex.tags) ++counts[static_cast<std::size_t>(t)];
  const int majority = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());

  std::vector<std::vector<int>> pred, gold;
  for (const LabeledExample& ex : data.test) {
    pred.emplace_back(ex.tags.size(), majority);
    gold.push_back(ex.tags);
  }
  return span_f1(pred, gold, TagScheme::from_names(data.tag_names)).f1;
}

}  // namespace etclab
