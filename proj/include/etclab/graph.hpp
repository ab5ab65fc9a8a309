#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "etclab/rng.hpp"
#include "etclab/tensor.hpp"

namespace etclab {
namespace detail {

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int M, int N, int K) {
  for (int m = 0; m < M; ++m) {
    const T* ar = a + static_cast<std::size_t>(m) * K;
    T* cr = c + static_cast<std::size_t>(m) * N;
    for (int k = 0; k < K; ++k) {
      const T av = ar[k];
      const T* br = b + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) cr[n] += av * br[n];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T   (B stored row-major N x K)
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int M, int N, int K) {
  for (int m = 0; m < M; ++m) {
    const T* ar = a + static_cast<std::size_t>(m) * K;
    T* cr = c + static_cast<std::size_t>(m) * N;
    for (int n = 0; n < N; ++n) {
      const T* br = b + static_cast<std::size_t>(n) * K;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      int k = 0;
      for (; k + 4 <= K; k += 4) {
        s0 += ar[k] * br[k];
        s1 += ar[k + 1] * br[k + 1];
        s2 += ar[k + 2] * br[k + 2];
        s3 += ar[k + 3] * br[k + 3];
      }
      T s = (s0 + s1) + (s2 + s3);
      for (; k < K; ++k) s += ar[k] * br[k];
      cr[n] += s;
    }
  }
}

// C[M x N] += A[K x M]^T * B[K x N]   (A stored row-major K x M)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int M, int N, int K) {
  for (int k = 0; k < K; ++k) {
    const T* ar = a + static_cast<std::size_t>(k) * M;
    const T* br = b + static_cast<std::size_t>(k) * N;
    for (int m = 0; m < M; ++m) {
      const T av = ar[m];
      T* cr = c + static_cast<std::size_t>(m) * N;
      for (int n = 0; n < N; ++n) cr[n] += av * br[n];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

// Counters surfaced by binary_cross_entropy when probabilities had to be
// clamped away from exactly 0 or 1.
struct BceStats {
  long long clamped = 0;
};

// Define-by-run reverse-mode autodiff over dense tensors. A Graph is built
// for one forward pass, backward() replays it in reverse, then the graph is
// discarded. Nodes whose inputs carry no gradient skip closure construction
// entirely, so pure inference (e.g. a frozen generator) records no backward
// state.
template <typename T>
class Graph {
 public:
  struct Var {
    int id = -1;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor<T> value, bool requires_grad = false) {
    return add_node(std::move(value), {}, requires_grad, nullptr);
  }
  Var constant(Tensor<T> value) { return input(std::move(value), false); }

  const Tensor<T>& value(Var v) const { return node(v).value; }

  const Tensor<T>& grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.data.empty()) throw std::logic_error("grad not computed for this node");
    return n.grad;
  }

  // ---- arithmetic ----

  Var add(Var a, Var b) {
    const Tensor<T>&va = value(a, "add"), &vb = value(b, "add");
    check_same_shape(va, vb, "add");
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return binary_op(std::move(out), a, b, [this](int self, int ia, int ib) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      });
      accumulate(ib, [&](Tensor<T>& db) {
        for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i];
      });
    });
  }

  // x[..., N] + bias[N], broadcast over leading dims
  Var bias_add(Var a, Var b) {
    const Tensor<T>&va = value(a, "bias_add"), &vb = value(b, "bias_add");
    if (vb.rank() != 1 || va.rank() < 1 || va.shape.back() != vb.dim(0))
      throw std::invalid_argument("bias_add: shape mismatch " + shape_str(va.shape) + " vs " +
                                  shape_str(vb.shape));
    const int n = vb.dim(0);
    Tensor<T> out = va;
    const std::size_t rows = out.numel() / static_cast<std::size_t>(n);
    for (std::size_t r = 0; r < rows; ++r)
      for (int i = 0; i < n; ++i) out[r * n + i] += vb[static_cast<std::size_t>(i)];
    return binary_op(std::move(out), a, b, [this, n, rows](int self, int ia, int ib) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      });
      accumulate(ib, [&](Tensor<T>& db) {
        for (std::size_t r = 0; r < rows; ++r)
          for (int i = 0; i < n; ++i) db[static_cast<std::size_t>(i)] += g[r * n + i];
      });
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&va = value(a, "mul"), &vb = value(b, "mul");
    check_same_shape(va, vb, "mul");
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return binary_op(std::move(out), a, b, [this](int self, int ia, int ib) {
      const Tensor<T>& g = nodes_[self].grad;
      const Tensor<T>&va = nodes_[ia].value, &vb = nodes_[ib].value;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * vb[i];
      });
      accumulate(ib, [&](Tensor<T>& db) {
        for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i] * va[i];
      });
    });
  }

  Var scale(Var a, T c) {
    Tensor<T> out = value(a, "scale");
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return unary_op(std::move(out), a, [this, c](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += c * g[i];
      });
    });
  }

  // Same data, new shape; element count must match.
  Var reshape(Var a, std::vector<int> new_shape) {
    const Tensor<T>& va = value(a, "reshape");
    Tensor<T> out(new_shape, va.data);
    return unary_op(std::move(out), a, [this](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      });
    });
  }

  Var sum(Var a) {
    const Tensor<T>& va = value(a, "sum");
    T s = 0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Tensor<T> out({}, std::vector<T>{s});
    return unary_op(std::move(out), a, [this](int self, int ia) {
      const T g = nodes_[self].grad[0];
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
      });
    });
  }

  // ---- matrix products ----

  // [M,K] x [K,N] -> [M,N], or [B,L,K] x [K,N] -> [B,L,N]
  Var matmul(Var a, Var b) {
    const Tensor<T>&va = value(a, "matmul"), &vb = value(b, "matmul");
    if (vb.rank() != 2 || va.rank() < 2 || va.shape.back() != vb.dim(0))
      throw std::invalid_argument("matmul: shape mismatch " + shape_str(va.shape) + " vs " +
                                  shape_str(vb.shape));
    const int k = vb.dim(0), n = vb.dim(1);
    const int m = static_cast<int>(va.numel()) / k;
    std::vector<int> out_shape = va.shape;
    out_shape.back() = n;
    Tensor<T> out(out_shape);
    detail::gemm_nn(va.data.data(), vb.data.data(), out.data.data(), m, n, k);
    return binary_op(std::move(out), a, b, [this, m, n, k](int self, int ia, int ib) {
      const Tensor<T>& g = nodes_[self].grad;
      const Tensor<T>&va = nodes_[ia].value, &vb = nodes_[ib].value;
      accumulate(ia, [&](Tensor<T>& da) {
        detail::gemm_nt(g.data.data(), vb.data.data(), da.data.data(), m, k, n);
      });
      accumulate(ib, [&](Tensor<T>& db) {
        detail::gemm_tn(va.data.data(), g.data.data(), db.data.data(), k, n, m);
      });
    });
  }

  // [B,L,K] x [B,K,M] -> [B,L,M]
  Var bmm(Var a, Var b) {
    const Tensor<T>&va = value(a, "bmm"), &vb = value(b, "bmm");
    if (va.rank() != 3 || vb.rank() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(1))
      throw std::invalid_argument("bmm: shape mismatch " + shape_str(va.shape) + " vs " +
                                  shape_str(vb.shape));
    const int bs = va.dim(0), l = va.dim(1), k = va.dim(2), m = vb.dim(2);
    Tensor<T> out({bs, l, m});
    for (int i = 0; i < bs; ++i)
      detail::gemm_nn(va.data.data() + static_cast<std::size_t>(i) * l * k,
                      vb.data.data() + static_cast<std::size_t>(i) * k * m,
                      out.data.data() + static_cast<std::size_t>(i) * l * m, l, m, k);
    return binary_op(std::move(out), a, b, [this, bs, l, k, m](int self, int ia, int ib) {
      const Tensor<T>& g = nodes_[self].grad;
      const Tensor<T>&va = nodes_[ia].value, &vb = nodes_[ib].value;
      accumulate(ia, [&](Tensor<T>& da) {
        for (int i = 0; i < bs; ++i)
          detail::gemm_nt(g.data.data() + static_cast<std::size_t>(i) * l * m,
                          vb.data.data() + static_cast<std::size_t>(i) * k * m,
                          da.data.data() + static_cast<std::size_t>(i) * l * k, l, k, m);
      });
      accumulate(ib, [&](Tensor<T>& db) {
        for (int i = 0; i < bs; ++i)
          detail::gemm_tn(va.data.data() + static_cast<std::size_t>(i) * l * k,
                          g.data.data() + static_cast<std::size_t>(i) * l * m,
                          db.data.data() + static_cast<std::size_t>(i) * k * m, k, m, l);
      });
    });
  }

  // [B,L,M] -> [B,M,L]
  Var transpose_last(Var a) {
    const Tensor<T>& va = value(a, "transpose_last");
    if (va.rank() != 3)
      throw std::invalid_argument("transpose_last: rank-3 tensor required, got " +
                                  shape_str(va.shape));
    const int bs = va.dim(0), l = va.dim(1), m = va.dim(2);
    Tensor<T> out({bs, m, l});
    for (int i = 0; i < bs; ++i)
      for (int r = 0; r < l; ++r)
        for (int c = 0; c < m; ++c)
          out[(static_cast<std::size_t>(i) * m + c) * l + r] =
              va[(static_cast<std::size_t>(i) * l + r) * m + c];
    return unary_op(std::move(out), a, [this, bs, l, m](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (int i = 0; i < bs; ++i)
          for (int r = 0; r < l; ++r)
            for (int c = 0; c < m; ++c)
              da[(static_cast<std::size_t>(i) * l + r) * m + c] +=
                  g[(static_cast<std::size_t>(i) * m + c) * l + r];
      });
    });
  }

  // ---- shape movement for attention heads ----

  // [B,L,H] -> [B*heads, L, H/heads]
  Var split_heads(Var a, int heads) {
    const Tensor<T>& va = value(a, "split_heads");
    if (va.rank() != 3 || heads <= 0 || va.dim(2) % heads != 0)
      throw std::invalid_argument("split_heads: bad input " + shape_str(va.shape) + " for " +
                                  std::to_string(heads) + " heads");
    const int bs = va.dim(0), l = va.dim(1), h = va.dim(2), dh = h / heads;
    Tensor<T> out({bs * heads, l, dh});
    for (int b = 0; b < bs; ++b)
      for (int j = 0; j < heads; ++j)
        for (int r = 0; r < l; ++r)
          for (int d = 0; d < dh; ++d)
            out[((static_cast<std::size_t>(b) * heads + j) * l + r) * dh + d] =
                va[(static_cast<std::size_t>(b) * l + r) * h + j * dh + d];
    return unary_op(std::move(out), a, [this, bs, l, h, dh, heads](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (int b = 0; b < bs; ++b)
          for (int j = 0; j < heads; ++j)
            for (int r = 0; r < l; ++r)
              for (int d = 0; d < dh; ++d)
                da[(static_cast<std::size_t>(b) * l + r) * h + j * dh + d] +=
                    g[((static_cast<std::size_t>(b) * heads + j) * l + r) * dh + d];
      });
    });
  }

  // [B*heads, L, dh] -> [B, L, heads*dh]
  Var merge_heads(Var a, int heads) {
    const Tensor<T>& va = value(a, "merge_heads");
    if (va.rank() != 3 || heads <= 0 || va.dim(0) % heads != 0)
      throw std::invalid_argument("merge_heads: bad input " + shape_str(va.shape) + " for " +
                                  std::to_string(heads) + " heads");
    const int bs = va.dim(0) / heads, l = va.dim(1), dh = va.dim(2), h = heads * dh;
    Tensor<T> out({bs, l, h});
    for (int b = 0; b < bs; ++b)
      for (int j = 0; j < heads; ++j)
        for (int r = 0; r < l; ++r)
          for (int d = 0; d < dh; ++d)
            out[(static_cast<std::size_t>(b) * l + r) * h + j * dh + d] =
                va[((static_cast<std::size_t>(b) * heads + j) * l + r) * dh + d];
    return unary_op(std::move(out), a, [this, bs, l, h, dh, heads](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (int b = 0; b < bs; ++b)
          for (int j = 0; j < heads; ++j)
            for (int r = 0; r < l; ++r)
              for (int d = 0; d < dh; ++d)
                da[((static_cast<std::size_t>(b) * heads + j) * l + r) * dh + d] +=
                    g[(static_cast<std::size_t>(b) * l + r) * h + j * dh + d];
      });
    });
  }

  // [B,L,H] -> [B,H], the first-position pooled state
  Var slice_first(Var a) {
    const Tensor<T>& va = value(a, "slice_first");
    if (va.rank() != 3)
      throw std::invalid_argument("slice_first: rank-3 tensor required, got " +
                                  shape_str(va.shape));
    const int bs = va.dim(0), l = va.dim(1), h = va.dim(2);
    Tensor<T> out({bs, h});
    for (int b = 0; b < bs; ++b)
      for (int i = 0; i < h; ++i)
        out[static_cast<std::size_t>(b) * h + i] = va[static_cast<std::size_t>(b) * l * h + i];
    return unary_op(std::move(out), a, [this, bs, l, h](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (int b = 0; b < bs; ++b)
          for (int i = 0; i < h; ++i)
            da[static_cast<std::size_t>(b) * l * h + i] += g[static_cast<std::size_t>(b) * h + i];
      });
    });
  }

  // ---- nonlinearities and normalization ----

  // Softmax over the last dimension. With a key mask, probabilities at
  // masked-out columns are exactly zero; an all-masked row yields all zeros.
  // The mask has shape [B, Lk]; rows of the input map onto mask rows in
  // order, input_rows % B == 0 (covers [B*heads, Lq, Lk] attention scores).
  Var softmax(Var a) { return softmax_impl(a, nullptr); }
  Var softmax_masked(Var a, const Tensor<std::uint8_t>& key_mask) {
    return softmax_impl(a, &key_mask);
  }

  Var gelu(Var a) {
    const Tensor<T>& va = value(a, "gelu");
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double x = static_cast<double>(out[i]);
      out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)));
    }
    return unary_op(std::move(out), a, [this](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      const Tensor<T>& va = nodes_[ia].value;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double x = static_cast<double>(va[i]);
          const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
          const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
          da[i] += g[i] * static_cast<T>(cdf + x * pdf);
        }
      });
    });
  }

  Var sigmoid(Var a) {
    const Tensor<T>& va = value(a, "sigmoid");
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = detail::stable_sigmoid(out[i]);
    const Tensor<T> saved = out;
    return unary_op(std::move(out), a, [this, saved](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i)
          da[i] += g[i] * saved[i] * (T(1) - saved[i]);
      });
    });
  }

  static constexpr double kLayerNormEps = 1e-5;

  // Normalizes the last dimension to zero mean / unit variance, then applies
  // the affine gain and bias (both shape [H]).
  Var layer_norm(Var a, Var gain, Var bias) {
    const Tensor<T>&va = value(a, "layer_norm"), &vg = value(gain, "layer_norm"),
                   &vb = value(bias, "layer_norm");
    const int h = va.shape.empty() ? 0 : va.shape.back();
    if (h == 0 || vg.shape != std::vector<int>{h} || vb.shape != std::vector<int>{h})
      throw std::invalid_argument("layer_norm: shape mismatch " + shape_str(va.shape) + " vs " +
                                  shape_str(vg.shape));
    const std::size_t rows = va.numel() / static_cast<std::size_t>(h);
    Tensor<T> out(va.shape);
    Tensor<T> xhat(va.shape);
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = va.data.data() + r * h;
      double mu = 0;
      for (int i = 0; i < h; ++i) mu += static_cast<double>(x[i]);
      mu /= h;
      double var = 0;
      for (int i = 0; i < h; ++i) {
        const double d = static_cast<double>(x[i]) - mu;
        var += d * d;
      }
      var /= h;
      const T istd = static_cast<T>(1.0 / std::sqrt(var + kLayerNormEps));
      inv_std[r] = istd;
      for (int i = 0; i < h; ++i) {
        const T xh = (x[i] - static_cast<T>(mu)) * istd;
        xhat[r * h + i] = xh;
        out[r * h + i] = vg[static_cast<std::size_t>(i)] * xh + vb[static_cast<std::size_t>(i)];
      }
    }
    const int ia = a.id, ig = gain.id, ib = bias.id;
    Tensor<T> xh_saved = xhat;
    std::vector<T> istd_saved = inv_std;
    return add_node(
        std::move(out), {ia, ig, ib},
        nodes_[ia].requires_grad || nodes_[ig].requires_grad || nodes_[ib].requires_grad,
        [this, ia, ig, ib, h, rows, xh = std::move(xh_saved),
         istd = std::move(istd_saved)](int self) {
          const Tensor<T>& g = nodes_[self].grad;
          const Tensor<T>& vg = nodes_[ig].value;
          accumulate(ig, [&](Tensor<T>& dg) {
            for (std::size_t r = 0; r < rows; ++r)
              for (int i = 0; i < h; ++i)
                dg[static_cast<std::size_t>(i)] += g[r * h + i] * xh[r * h + i];
          });
          accumulate(ib, [&](Tensor<T>& db) {
            for (std::size_t r = 0; r < rows; ++r)
              for (int i = 0; i < h; ++i) db[static_cast<std::size_t>(i)] += g[r * h + i];
          });
          accumulate(ia, [&](Tensor<T>& da) {
            for (std::size_t r = 0; r < rows; ++r) {
              double sum_dxhat = 0, sum_dxhat_xh = 0;
              for (int i = 0; i < h; ++i) {
                const double dxh =
                    static_cast<double>(g[r * h + i]) * static_cast<double>(vg[static_cast<std::size_t>(i)]);
                sum_dxhat += dxh;
                sum_dxhat_xh += dxh * static_cast<double>(xh[r * h + i]);
              }
              const double istd_r = static_cast<double>(istd[r]);
              for (int i = 0; i < h; ++i) {
                const double dxh =
                    static_cast<double>(g[r * h + i]) * static_cast<double>(vg[static_cast<std::size_t>(i)]);
                da[r * h + i] += static_cast<T>(
                    istd_r * (dxh - sum_dxhat / h -
                              static_cast<double>(xh[r * h + i]) * sum_dxhat_xh / h));
              }
            }
          });
        });
  }

  // ---- lookups, dropout ----

  // table [V,H], ids length B*L -> [B,L,H]
  Var embedding(Var table, const std::vector<std::int32_t>& ids, int batch, int len) {
    const Tensor<T>& vt = value(table, "embedding");
    if (vt.rank() != 2) throw std::invalid_argument("embedding: table must be [V,H]");
    if (static_cast<std::size_t>(batch) * len != ids.size())
      throw std::invalid_argument("embedding: ids length does not match batch*len");
    const int v = vt.dim(0), h = vt.dim(1);
    for (const std::int32_t id : ids)
      if (id < 0 || id >= v)
        throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                    " out of range for vocab " + std::to_string(v));
    Tensor<T> out({batch, len, h});
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (int i = 0; i < h; ++i)
        out[r * h + i] = vt[static_cast<std::size_t>(ids[r]) * h + i];
    return unary_op(std::move(out), table, [this, ids, h](int self, int it) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(it, [&](Tensor<T>& dt) {
        for (std::size_t r = 0; r < ids.size(); ++r)
          for (int i = 0; i < h; ++i)
            dt[static_cast<std::size_t>(ids[r]) * h + i] += g[r * h + i];
      });
    });
  }

  // Inverted dropout; rate 0 is the identity and consumes no randomness.
  Var dropout(Var a, double rate, Rng& rng) {
    if (rate == 0.0) return a;
    if (rate < 0.0 || rate >= 1.0)
      throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    const Tensor<T>& va = value(a, "dropout");
    const T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> mask(va.shape);
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const T m = rng.bernoulli(1.0 - rate) ? inv_keep : T(0);
      mask[i] = m;
      out[i] *= m;
    }
    return unary_op(std::move(out), a, [this, mask = std::move(mask)](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * mask[i];
      });
    });
  }

  // ---- losses ----

  // Cross entropy of logits against target ids, averaged over positions with
  // pos_mask=1. Zero contributing positions yields loss 0 with zero gradient.
  // logits: [N,V] or [B,L,V] with N = B*L rows.
  Var cross_entropy(Var logits, const std::vector<std::int32_t>& targets,
                    const std::vector<std::uint8_t>& pos_mask) {
    const Tensor<T>& vl = value(logits, "cross_entropy");
    if (vl.rank() < 2) throw std::invalid_argument("cross_entropy: logits rank must be >= 2");
    const int v = vl.shape.back();
    const std::size_t rows = vl.numel() / static_cast<std::size_t>(v);
    if (targets.size() != rows || pos_mask.size() != rows)
      throw std::invalid_argument("cross_entropy: targets/mask length does not match rows");
    std::size_t contributing = 0;
    double total = 0;
    Tensor<T> probs({static_cast<int>(rows), v});
    for (std::size_t r = 0; r < rows; ++r) {
      if (!pos_mask[r]) continue;
      if (targets[r] < 0 || targets[r] >= v)
        throw std::invalid_argument("cross_entropy: target id out of range");
      ++contributing;
      const T* x = vl.data.data() + r * v;
      double mx = static_cast<double>(x[0]);
      for (int i = 1; i < v; ++i) mx = std::max(mx, static_cast<double>(x[i]));
      double se = 0;
      for (int i = 0; i < v; ++i) se += std::exp(static_cast<double>(x[i]) - mx);
      const double lse = mx + std::log(se);
      total += lse - static_cast<double>(x[targets[r]]);
      for (int i = 0; i < v; ++i)
        probs[r * v + i] = static_cast<T>(std::exp(static_cast<double>(x[i]) - mx) / se);
    }
    const double loss = contributing ? total / static_cast<double>(contributing) : 0.0;
    Tensor<T> out({}, std::vector<T>{static_cast<T>(loss)});
    if (contributing == 0) return unary_op(std::move(out), logits, nullptr);
    const T inv_c = static_cast<T>(1.0 / static_cast<double>(contributing));
    return unary_op(std::move(out), logits,
                    [this, targets, pos_mask, v, rows, inv_c,
                     probs = std::move(probs)](int self, int il) {
                      const T g = nodes_[self].grad[0];
                      accumulate(il, [&](Tensor<T>& dl) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          if (!pos_mask[r]) continue;
                          for (int i = 0; i < v; ++i)
                            dl[r * v + i] += g * inv_c * probs[r * v + i];
                          dl[r * v + targets[r]] -= g * inv_c;
                        }
                      });
                    });
  }

  // Binary cross entropy of per-position probabilities against 0/1 labels,
  // averaged over positions with pos_mask=1. Probabilities at exactly 0 or 1
  // are clamped to 1e-12 from the boundary and counted in stats.
  Var binary_cross_entropy(Var probs, const std::vector<std::uint8_t>& labels,
                           const std::vector<std::uint8_t>& pos_mask, BceStats* stats = nullptr) {
    const Tensor<T>& vp = value(probs, "binary_cross_entropy");
    const std::size_t n = vp.numel();
    if (labels.size() != n || pos_mask.size() != n)
      throw std::invalid_argument("binary_cross_entropy: labels/mask length mismatch");
    constexpr double kClamp = 1e-12;
    std::size_t contributing = 0;
    double total = 0;
    long long clamped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pos_mask[i]) continue;
      ++contributing;
      double p = static_cast<double>(vp[i]);
      if (p < kClamp || p > 1.0 - kClamp) {
        ++clamped;
        p = std::min(std::max(p, kClamp), 1.0 - kClamp);
      }
      total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    if (stats) stats->clamped += clamped;
    const double loss = contributing ? total / static_cast<double>(contributing) : 0.0;
    Tensor<T> out({}, std::vector<T>{static_cast<T>(loss)});
    if (contributing == 0) return unary_op(std::move(out), probs, nullptr);
    const double inv_c = 1.0 / static_cast<double>(contributing);
    return unary_op(std::move(out), probs,
                    [this, labels, pos_mask, n, inv_c](int self, int ip) {
                      const double g = static_cast<double>(nodes_[self].grad[0]);
                      const Tensor<T>& vp = nodes_[ip].value;
                      accumulate(ip, [&](Tensor<T>& dp) {
                        for (std::size_t i = 0; i < n; ++i) {
                          if (!pos_mask[i]) continue;
                          const double p = static_cast<double>(vp[i]);
                          double d = 0;
                          if (labels[i]) {
                            if (p >= kClamp) d = -1.0 / p;  // clamped region has zero slope
                          } else {
                            if (p <= 1.0 - kClamp) d = 1.0 / (1.0 - p);
                          }
                          dp[i] += static_cast<T>(g * inv_c * d);
                        }
                      });
                    });
  }

  // ---- backward ----

  // Populates gradients of every node the loss depends on. The loss must be
  // a scalar (rank 0 or a single element).
  void backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(ln.value.shape));
    // restrict the sweep to nodes the loss actually depends on
    std::vector<std::uint8_t> needed(nodes_.size(), 0);
    std::vector<int> stack{loss.id};
    needed[static_cast<std::size_t>(loss.id)] = 1;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      for (const int p : nodes_[static_cast<std::size_t>(id)].parents)
        if (!needed[static_cast<std::size_t>(p)]) {
          needed[static_cast<std::size_t>(p)] = 1;
          stack.push_back(p);
        }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].requires_grad)
        nodes_[i].grad = Tensor<T>(nodes_[i].value.shape);  // zeros; leaves keep zero grad
    node_mut(loss).grad = Tensor<T>(ln.value.shape, std::vector<T>(1, T(1)));
    for (int id = loss.id; id >= 0; --id) {
      Node& nd = nodes_[static_cast<std::size_t>(id)];
      if (needed[static_cast<std::size_t>(id)] && nd.requires_grad && nd.backprop)
        nd.backprop(id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> parents;
    bool requires_grad = false;
    std::function<void(int)> backprop;
  };

  std::vector<Node> nodes_;

  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::logic_error("invalid graph variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  Node& node_mut(Var v) { return const_cast<Node&>(node(v)); }

  const Tensor<T>& value(Var v, const char*) const { return node(v).value; }

  Var add_node(Tensor<T> value, std::vector<int> parents, bool requires_grad,
               std::function<void(int)> backprop) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  template <typename Fn>
  Var unary_op(Tensor<T> out, Var a, Fn&& back) {
    const bool rg = node(a).requires_grad;
    const int ia = a.id;
    if constexpr (std::is_same_v<std::decay_t<Fn>, std::nullptr_t>) {
      return add_node(std::move(out), {ia}, rg, nullptr);
    } else {
      if (!rg) return add_node(std::move(out), {ia}, false, nullptr);
      return add_node(std::move(out), {ia}, true,
                      [this, ia, back = std::forward<Fn>(back)](int self) { back(self, ia); });
    }
  }

  template <typename Fn>
  Var binary_op(Tensor<T> out, Var a, Var b, Fn&& back) {
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    const int ia = a.id, ib = b.id;
    if (!rg) return add_node(std::move(out), {ia, ib}, false, nullptr);
    return add_node(std::move(out), {ia, ib}, true,
                    [this, ia, ib, back = std::forward<Fn>(back)](int self) {
                      back(self, ia, ib);
                    });
  }

  // Runs fn on the grad buffer of node id, if that node wants gradients.
  template <typename Fn>
  void accumulate(int id, Fn&& fn) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    fn(n.grad);
  }

  Var softmax_impl(Var a, const Tensor<std::uint8_t>* key_mask) {
    const Tensor<T>& va = value(a, "softmax");
    if (va.rank() < 1) throw std::invalid_argument("softmax: rank must be >= 1");
    const int w = va.shape.back();
    const std::size_t rows = va.numel() / static_cast<std::size_t>(w);
    std::size_t mask_rows = 0, group = 1;
    if (key_mask) {
      if (key_mask->rank() != 2 || key_mask->shape.back() != w)
        throw std::invalid_argument("softmax: key mask must be [B," + std::to_string(w) + "]");
      mask_rows = static_cast<std::size_t>(key_mask->dim(0));
      if (mask_rows == 0 || rows % mask_rows != 0)
        throw std::invalid_argument("softmax: mask rows do not divide input rows");
      group = rows / mask_rows;
    }
    Tensor<T> out(va.shape);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = va.data.data() + r * w;
      T* y = out.data.data() + r * w;
      const std::uint8_t* m =
          key_mask ? key_mask->data.data() + (r / group) * w : nullptr;
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < w; ++i)
        if (!m || m[i]) mx = std::max(mx, static_cast<double>(x[i]));
      double se = 0;
      for (int i = 0; i < w; ++i)
        if (!m || m[i]) se += std::exp(static_cast<double>(x[i]) - mx);
      if (se == 0 || !std::isfinite(mx)) {
        for (int i = 0; i < w; ++i) y[i] = T(0);  // fully masked row
        continue;
      }
      for (int i = 0; i < w; ++i)
        y[i] = (!m || m[i]) ? static_cast<T>(std::exp(static_cast<double>(x[i]) - mx) / se)
                            : T(0);
    }
    const Tensor<T> saved = out;
    return unary_op(std::move(out), a, [this, saved, w, rows](int self, int ia) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(ia, [&](Tensor<T>& da) {
        for (std::size_t r = 0; r < rows; ++r) {
          const T* p = saved.data.data() + r * w;
          const T* gr = g.data.data() + r * w;
          double dot = 0;
          for (int i = 0; i < w; ++i) dot += static_cast<double>(gr[i]) * static_cast<double>(p[i]);
          T* d = da.data.data() + r * w;
          for (int i = 0; i < w; ++i)
            d[i] += static_cast<T>(p[i] * (static_cast<double>(gr[i]) - dot));
        }
      });
    });
  }
};

// Central-difference verification of reverse-mode gradients. `build` makes a
// scalar loss from the input variable; it is re-invoked for every
// perturbation, so any randomness inside must be seeded per call. Returns the
// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1).
inline double grad_check(
    const std::function<Graph<double>::Var(Graph<double>&, Graph<double>::Var)>& build,
    const Tensor<double>& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("invalid step");
  Graph<double> g;
  auto vx = g.input(x, true);
  auto loss = build(g, vx);
  if (g.value(loss).numel() != 1)
    throw std::invalid_argument("grad_check: build must produce a scalar loss");
  g.backward(loss);
  const Tensor<double> analytic = g.grad(vx);

  const auto eval = [&](const Tensor<double>& xt) {
    Graph<double> gg;
    auto v = gg.input(xt, false);
    auto l = build(gg, v);
    return gg.value(l)[0];
  };

  double max_err = 0;
  Tensor<double> xt = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = xt[i];
    xt[i] = orig + eps;
    const double fp = eval(xt);
    xt[i] = orig - eps;
    const double fm = eval(xt);
    xt[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1.0});
    max_err = std::max(max_err, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

}  // namespace etclab
