#include "etclab/hash.hpp"

#include <openssl/sha.h>

#include <array>
#include <cstring>

namespace etclab {
namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(const void* data, std::size_t len) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
  SHA256(static_cast<const unsigned char*>(data), len, out.data());
  return out;
}

std::string to_hex(const unsigned char* d, std::size_t n) {
  static const char* kHex = "0123456789abcdef";
  std::string s(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = kHex[d[i] >> 4];
    s[2 * i + 1] = kHex[d[i] & 0xf];
  }
  return s;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t len) {
  const auto d = digest(data, len);
  return to_hex(d.data(), d.size());
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::uint64_t sha256_u64(const void* data, std::size_t len) {
  const auto d = digest(data, len);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

std::uint64_t sha256_u64(const std::string& s) { return sha256_u64(s.data(), s.size()); }

std::string sha256_hex_arrays(const std::vector<NamedArrayView>& arrays) {
  // Serialize to a flat byte stream: name, shape, then little-endian doubles.
  // Length prefixes keep distinct inputs from colliding by concatenation.
  std::string buf;
  const auto put_u64 = [&buf](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  for (const NamedArrayView& a : arrays) {
    put_u64(a.name.size());
    buf += a.name;
    put_u64(a.shape.size());
    for (const int d : a.shape) put_u64(static_cast<std::uint64_t>(d));
    put_u64(a.len);
    for (std::size_t i = 0; i < a.len; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &a.data[i], 8);
      put_u64(bits);
    }
  }
  return sha256_hex(buf);
}

}  // namespace etclab
