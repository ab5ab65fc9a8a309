#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etclab/errors.hpp"
#include "etclab/graph.hpp"
#include "etclab/hash.hpp"
#include "etclab/rng.hpp"
#include "etclab/tensor.hpp"

namespace etclab {

struct EncoderConfig {
  int layers = 2;
  int hidden = 64;
  int ffn = 256;
  int heads = 4;
  int max_len = 128;
  int vocab_size = 512;
  double dropout = 0.1;

  void validate() const {
    if (layers < 1 || hidden < 1 || ffn < 1 || heads < 1 || max_len < 1 || vocab_size < 5)
      throw DataError("encoder config fields must be positive");
    if (hidden % heads != 0)
      throw DataError("hidden " + std::to_string(hidden) + " not divisible by heads " +
                      std::to_string(heads));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("dropout must be in [0,1)");
  }

  bool body_equals(const EncoderConfig& o) const {
    return layers == o.layers && hidden == o.hidden && ffn == o.ffn && heads == o.heads &&
           max_len == o.max_len && vocab_size == o.vocab_size;
  }
};

enum class Head { mlm, disc, token_cls, seq_cls, vocab };

// Which heads a parameter set carries; class-count fields are 0 when absent.
struct HeadSpec {
  bool mlm = false;
  bool disc = false;
  bool vocab = false;
  int token_cls = 0;  // number of tags
  int seq_cls = 0;    // number of classes
};

template <typename T>
struct EncoderParams {
  struct Layer {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
  };

  EncoderConfig cfg;
  HeadSpec heads;
  Tensor<T> tok_emb;  // [V,H]
  Tensor<T> pos_emb;  // [max_len,H]
  std::vector<Layer> layer;
  Tensor<T> lnf_g, lnf_b;
  Tensor<T> mlm_w, mlm_b;      // [H,V],[V]
  Tensor<T> disc_w, disc_b;    // [H,1],[1]
  Tensor<T> tokcls_w, tokcls_b;
  Tensor<T> seqcls_w, seqcls_b;
  Tensor<T> vocab_w, vocab_b;
};

// Visits every parameter tensor in a fixed canonical order; this order
// defines optimizer state slots, checkpoint layout, and parameter hashes.
template <typename T, typename Fn>
void for_each_param(EncoderParams<T>& p, Fn&& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  for (std::size_t i = 0; i < p.layer.size(); ++i) {
    auto& l = p.layer[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    fn(pre + "ln1_g", l.ln1_g);
    fn(pre + "ln1_b", l.ln1_b);
    fn(pre + "wq", l.wq);
    fn(pre + "bq", l.bq);
    fn(pre + "wk", l.wk);
    fn(pre + "bk", l.bk);
    fn(pre + "wv", l.wv);
    fn(pre + "bv", l.bv);
    fn(pre + "wo", l.wo);
    fn(pre + "bo", l.bo);
    fn(pre + "ln2_g", l.ln2_g);
    fn(pre + "ln2_b", l.ln2_b);
    fn(pre + "w1", l.w1);
    fn(pre + "b1", l.b1);
    fn(pre + "w2", l.w2);
    fn(pre + "b2", l.b2);
  }
  fn("lnf_g", p.lnf_g);
  fn("lnf_b", p.lnf_b);
  if (p.heads.mlm) {
    fn("mlm_w", p.mlm_w);
    fn("mlm_b", p.mlm_b);
  }
  if (p.heads.disc) {
    fn("disc_w", p.disc_w);
    fn("disc_b", p.disc_b);
  }
  if (p.heads.token_cls > 0) {
    fn("tokcls_w", p.tokcls_w);
    fn("tokcls_b", p.tokcls_b);
  }
  if (p.heads.seq_cls > 0) {
    fn("seqcls_w", p.seqcls_w);
    fn("seqcls_b", p.seqcls_b);
  }
  if (p.heads.vocab) {
    fn("vocab_w", p.vocab_w);
    fn("vocab_b", p.vocab_b);
  }
}

template <typename T, typename Fn>
void for_each_param(const EncoderParams<T>& p, Fn&& fn) {
  for_each_param(const_cast<EncoderParams<T>&>(p),
                 [&fn](const std::string& name, Tensor<T>& t) {
                   fn(name, static_cast<const Tensor<T>&>(t));
                 });
}

namespace detail {

template <typename T>
Tensor<T> normal_init(std::vector<int> shape, Rng& rng, double std_dev = 0.02) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(std_dev * rng.normal());
  return t;
}

}  // namespace detail

// Weights ~ N(0, 0.02^2), biases zero, layer-norm gains one. Head weights
// follow the same scheme; tensors draw in canonical order so a seed pins the
// full parameter set.
template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg, const HeadSpec& heads,
                             std::uint64_t seed) {
  cfg.validate();
  const int h = cfg.hidden, f = cfg.ffn, v = cfg.vocab_size;
  Rng rng(derive_seed(seed, "init", 0));
  EncoderParams<T> p;
  p.cfg = cfg;
  p.heads = heads;
  p.tok_emb = detail::normal_init<T>({v, h}, rng);
  p.pos_emb = detail::normal_init<T>({cfg.max_len, h}, rng);
  p.layer.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& l : p.layer) {
    l.ln1_g = Tensor<T>({h}, T(1));
    l.ln1_b = Tensor<T>({h});
    l.wq = detail::normal_init<T>({h, h}, rng);
    l.bq = Tensor<T>({h});
    l.wk = detail::normal_init<T>({h, h}, rng);
    l.bk = Tensor<T>({h});
    l.wv = detail::normal_init<T>({h, h}, rng);
    l.bv = Tensor<T>({h});
    l.wo = detail::normal_init<T>({h, h}, rng);
    l.bo = Tensor<T>({h});
    l.ln2_g = Tensor<T>({h}, T(1));
    l.ln2_b = Tensor<T>({h});
    l.w1 = detail::normal_init<T>({h, f}, rng);
    l.b1 = Tensor<T>({f});
    l.w2 = detail::normal_init<T>({f, h}, rng);
    l.b2 = Tensor<T>({h});
  }
  p.lnf_g = Tensor<T>({h}, T(1));
  p.lnf_b = Tensor<T>({h});
  if (heads.mlm) {
    p.mlm_w = detail::normal_init<T>({h, v}, rng);
    p.mlm_b = Tensor<T>({v});
  }
  if (heads.disc) {
    p.disc_w = detail::normal_init<T>({h, 1}, rng);
    p.disc_b = Tensor<T>({1});
  }
  if (heads.token_cls > 0) {
    p.tokcls_w = detail::normal_init<T>({h, heads.token_cls}, rng);
    p.tokcls_b = Tensor<T>({heads.token_cls});
  }
  if (heads.seq_cls > 0) {
    p.seqcls_w = detail::normal_init<T>({h, heads.seq_cls}, rng);
    p.seqcls_b = Tensor<T>({heads.seq_cls});
  }
  if (heads.vocab) {
    p.vocab_w = detail::normal_init<T>({h, v}, rng);
    p.vocab_b = Tensor<T>({v});
  }
  return p;
}

// Minibatch of id sequences padded to a common length.
struct Batch {
  int b = 0;
  int l = 0;
  std::vector<std::int32_t> ids;       // b*l, row-major
  Tensor<std::uint8_t> pad_mask;       // [b,l], 1 where a real token sits
  std::vector<std::uint8_t> flat_mask() const {
    return std::vector<std::uint8_t>(pad_mask.data.begin(), pad_mask.data.end());
  }
};

inline Batch make_batch(const std::vector<std::vector<std::int32_t>>& rows, int pad_id) {
  Batch batch;
  batch.b = static_cast<int>(rows.size());
  std::size_t l = 1;
  for (const auto& r : rows) l = std::max(l, r.size());
  batch.l = static_cast<int>(l);
  batch.ids.assign(static_cast<std::size_t>(batch.b) * l, pad_id);
  batch.pad_mask = Tensor<std::uint8_t>({batch.b, batch.l});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t t = 0; t < rows[r].size(); ++t) {
      batch.ids[r * l + t] = rows[r][t];
      batch.pad_mask[r * l + t] = 1;
    }
  return batch;
}

// Graph-bound view of EncoderParams: one Var per tensor plus the name list
// in canonical order, used to read gradients back after backward().
template <typename T>
struct BoundParams {
  const EncoderParams<T>* source = nullptr;
  std::vector<std::pair<std::string, typename Graph<T>::Var>> named;

  typename Graph<T>::Var at(const std::string& name) const {
    for (const auto& [n, v] : named)
      if (n == name) return v;
    throw DataError("missing head or parameter: " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, v] : named)
      if (n == name) return true;
    return false;
  }
};

template <typename T>
BoundParams<T> bind_params(Graph<T>& g, const EncoderParams<T>& p, bool trainable) {
  BoundParams<T> bp;
  bp.source = &p;
  for_each_param(p, [&](const std::string& name, const Tensor<T>& t) {
    bp.named.emplace_back(name, g.input(t, trainable));
  });
  return bp;
}

// Pre-norm transformer stack: x + Attn(LN(x)), then x + FFN(LN(x)), with a
// final layer norm. Dropout applies to embeddings, attention probabilities,
// and each sublayer output, in that fixed order per layer so a seeded rng
// stream reproduces a run exactly. Padded keys receive zero attention.
template <typename T>
typename Graph<T>::Var encoder_forward(Graph<T>& g, const BoundParams<T>& bp, const Batch& batch,
                                       double dropout_rate, Rng& rng) {
  const EncoderConfig& cfg = bp.source->cfg;
  cfg.validate();
  if (batch.l > cfg.max_len)
    throw DataError("sequence length " + std::to_string(batch.l) + " exceeds max_len " +
                    std::to_string(cfg.max_len));
  for (const auto id : batch.ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw DataError("token id " + std::to_string(id) + " outside vocabulary");

  std::vector<std::int32_t> pos_ids(batch.ids.size());
  for (int r = 0; r < batch.b; ++r)
    for (int t = 0; t < batch.l; ++t)
      pos_ids[static_cast<std::size_t>(r) * batch.l + t] = t;

  auto x = g.add(g.embedding(bp.at("tok_emb"), batch.ids, batch.b, batch.l),
                 g.embedding(bp.at("pos_emb"), pos_ids, batch.b, batch.l));
  x = g.dropout(x, dropout_rate, rng);

  const int dh = cfg.hidden / cfg.heads;
  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (int li = 0; li < cfg.layers; ++li) {
    const std::string pre = "layer" + std::to_string(li) + ".";
    auto ln1 = g.layer_norm(x, bp.at(pre + "ln1_g"), bp.at(pre + "ln1_b"));
    auto q = g.split_heads(g.bias_add(g.matmul(ln1, bp.at(pre + "wq")), bp.at(pre + "bq")),
                           cfg.heads);
    auto k = g.split_heads(g.bias_add(g.matmul(ln1, bp.at(pre + "wk")), bp.at(pre + "bk")),
                           cfg.heads);
    auto v = g.split_heads(g.bias_add(g.matmul(ln1, bp.at(pre + "wv")), bp.at(pre + "bv")),
                           cfg.heads);
    auto scores = g.scale(g.bmm(q, g.transpose_last(k)), inv_sqrt_dh);
    auto probs = g.dropout(g.softmax_masked(scores, batch.pad_mask), dropout_rate, rng);
    auto ctx = g.merge_heads(g.bmm(probs, v), cfg.heads);
    auto attn = g.bias_add(g.matmul(ctx, bp.at(pre + "wo")), bp.at(pre + "bo"));
    x = g.add(x, g.dropout(attn, dropout_rate, rng));

    auto ln2 = g.layer_norm(x, bp.at(pre + "ln2_g"), bp.at(pre + "ln2_b"));
    auto mid = g.gelu(g.bias_add(g.matmul(ln2, bp.at(pre + "w1")), bp.at(pre + "b1")));
    auto ffn = g.bias_add(g.matmul(mid, bp.at(pre + "w2")), bp.at(pre + "b2"));
    x = g.add(x, g.dropout(ffn, dropout_rate, rng));
  }
  return g.layer_norm(x, bp.at("lnf_g"), bp.at("lnf_b"));
}

// disc returns per-token probabilities [B,L]; seq_cls pools the first
// position; the other heads return per-token logits.
template <typename T>
typename Graph<T>::Var head_forward(Graph<T>& g, const BoundParams<T>& bp,
                                    typename Graph<T>::Var hidden, Head head) {
  const auto require = [&](const char* w, const char* b) {
    if (!bp.has(w) || !bp.has(b)) throw DataError(std::string("missing head: ") + w);
  };
  switch (head) {
    case Head::mlm:
      require("mlm_w", "mlm_b");
      return g.bias_add(g.matmul(hidden, bp.at("mlm_w")), bp.at("mlm_b"));
    case Head::vocab:
      require("vocab_w", "vocab_b");
      return g.bias_add(g.matmul(hidden, bp.at("vocab_w")), bp.at("vocab_b"));
    case Head::token_cls:
      require("tokcls_w", "tokcls_b");
      return g.bias_add(g.matmul(hidden, bp.at("tokcls_w")), bp.at("tokcls_b"));
    case Head::seq_cls:
      require("seqcls_w", "seqcls_b");
      return g.bias_add(g.matmul(g.slice_first(hidden), bp.at("seqcls_w")), bp.at("seqcls_b"));
    case Head::disc: {
      require("disc_w", "disc_b");
      auto logits = g.bias_add(g.matmul(hidden, bp.at("disc_w")), bp.at("disc_b"));
      const auto& shape = g.value(logits).shape;  // [B,L,1]
      return g.sigmoid(g.reshape(logits, {shape[0], shape[1]}));
    }
  }
  throw DataError("missing head");
}

// Fingerprint of every parameter in canonical order, via 64-bit values so
// the hash is precision-independent for values representable in both widths.
template <typename T>
std::string params_hash(const EncoderParams<T>& p) {
  std::vector<std::vector<double>> buffers;
  std::vector<NamedArrayView> views;
  for_each_param(p, [&](const std::string& name, const Tensor<T>& t) {
    buffers.emplace_back(t.data.begin(), t.data.end());
    NamedArrayView v;
    v.name = name;
    v.shape = t.shape;
    v.data = nullptr;  // buffers may still reallocate; fixed up below
    v.len = t.numel();
    views.push_back(std::move(v));
  });
  for (std::size_t i = 0; i < views.size(); ++i) views[i].data = buffers[i].data();
  return sha256_hex_arrays(views);
}

}  // namespace etclab
