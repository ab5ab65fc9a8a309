#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <unordered_map>
#include <vector>

#include "etclab/encoder.hpp"
#include "etclab/errors.hpp"

namespace etclab {

// Checkpoint byte layout, all integers and floats little-endian:
//
//   magic           8 bytes  "ETCLABCK"
//   version         u32      currently 1
//   layers..vocab   6 x i32  EncoderConfig body fields
//   dropout         f64
//   vocab_hash      u64      fingerprint of the tokenizer vocabulary
//   has_mlm         u8       head presence flags
//   has_disc        u8
//   has_vocab       u8
//   token_cls       i32      tag count, 0 = absent
//   seq_cls         i32      class count, 0 = absent
//   block_count     u32
//   per block:
//     name_len      u32
//     name          name_len bytes
//     rank          u32
//     dims          rank x i32
//     values        product(dims) x f64
//
// Values are stored as 64-bit floats regardless of training precision;
// 32-bit parameters round-trip exactly because every f32 is an f64.

namespace ckpt_detail {

constexpr char kMagic[8] = {'E', 'T', 'C', 'L', 'A', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void raw(void* p, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("incompatible checkpoint: truncated");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    const std::uint64_t lo = u32(), hi = u32();
    return lo | (hi << 32);
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const EncoderParams<T>& p, std::uint64_t vocab_hash,
                     const std::string& path) {
  using namespace ckpt_detail;
  std::string out;
  put_bytes(out, kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_i32(out, p.cfg.layers);
  put_i32(out, p.cfg.hidden);
  put_i32(out, p.cfg.ffn);
  put_i32(out, p.cfg.heads);
  put_i32(out, p.cfg.max_len);
  put_i32(out, p.cfg.vocab_size);
  put_f64(out, p.cfg.dropout);
  put_u64(out, vocab_hash);
  out.push_back(p.heads.mlm ? 1 : 0);
  out.push_back(p.heads.disc ? 1 : 0);
  out.push_back(p.heads.vocab ? 1 : 0);
  put_i32(out, p.heads.token_cls);
  put_i32(out, p.heads.seq_cls);

  std::uint32_t blocks = 0;
  for_each_param(p, [&blocks](const std::string&, const Tensor<T>&) { ++blocks; });
  put_u32(out, blocks);
  for_each_param(p, [&out](const std::string& name, const Tensor<T>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (const int d : t.shape) put_i32(out, d);
    for (std::size_t i = 0; i < t.numel(); ++i) put_f64(out, static_cast<double>(t[i]));
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("cannot write checkpoint " + path);
}

struct LoadedCheckpoint {
  EncoderParams<double> params;
  std::uint64_t vocab_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("incompatible checkpoint: bad magic in " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("incompatible checkpoint: version " + std::to_string(version));

  EncoderConfig cfg;
  cfg.layers = r.i32();
  cfg.hidden = r.i32();
  cfg.ffn = r.i32();
  cfg.heads = r.i32();
  cfg.max_len = r.i32();
  cfg.vocab_size = r.i32();
  cfg.dropout = r.f64();
  cfg.validate();
  LoadedCheckpoint out;
  out.vocab_hash = r.u64();
  HeadSpec heads;
  std::uint8_t flags[3];
  r.raw(flags, 3);
  heads.mlm = flags[0] != 0;
  heads.disc = flags[1] != 0;
  heads.vocab = flags[2] != 0;
  heads.token_cls = r.i32();
  heads.seq_cls = r.i32();

  out.params = init_params<double>(cfg, heads, 0);
  std::unordered_map<std::string, Tensor<double>*> slots;
  for_each_param(out.params, [&slots](const std::string& name, Tensor<double>& t) {
    slots[name] = &t;
  });

  const std::uint32_t blocks = r.u32();
  if (blocks != slots.size())
    throw DataError("incompatible checkpoint: expected " + std::to_string(slots.size()) +
                    " parameter blocks, found " + std::to_string(blocks));
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const auto it = slots.find(name);
    if (it == slots.end()) throw DataError("incompatible checkpoint: unknown block " + name);
    const std::uint32_t rank = r.u32();
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.i32());
    if (shape != it->second->shape)
      throw DataError("incompatible checkpoint: shape mismatch in block " + name);
    for (std::size_t i = 0; i < it->second->numel(); ++i) (*it->second)[i] = r.f64();
    slots.erase(it);
  }
  if (!slots.empty() || !r.done())
    throw DataError("incompatible checkpoint: trailing or missing data");
  return out;
}

template <typename T, typename F>
EncoderParams<T> cast_params(const EncoderParams<F>& src) {
  EncoderParams<T> dst = init_params<T>(src.cfg, src.heads, 0);
  std::vector<Tensor<T>*> dst_slots;
  for_each_param(dst, [&](const std::string&, Tensor<T>& t) { dst_slots.push_back(&t); });
  std::size_t i = 0;
  for_each_param(src, [&](const std::string&, const Tensor<F>& t) {
    *dst_slots[i++] = t.template cast<T>();
  });
  return dst;
}

// Keeps the encoder body (and any head that matches the wanted spec) from
// `src`; heads that are missing or mismatched are freshly initialized from
// the seed. This is the stage-2 / fine-tune initialization path.
template <typename T>
EncoderParams<T> adapt_heads(const EncoderParams<T>& src, const HeadSpec& want,
                             std::uint64_t seed) {
  EncoderParams<T> out = init_params<T>(src.cfg, want, derive_seed(seed, "adapt-heads", 0));
  std::unordered_map<std::string, const Tensor<T>*> have;
  for_each_param(src, [&](const std::string& name, const Tensor<T>& t) { have[name] = &t; });
  for_each_param(out, [&](const std::string& name, Tensor<T>& t) {
    const auto it = have.find(name);
    if (it != have.end() && it->second->shape == t.shape) t = *it->second;
  });
  return out;
}

}  // namespace etclab
