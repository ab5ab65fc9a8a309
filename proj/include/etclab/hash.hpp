#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace etclab {

// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

// First 8 bytes of the SHA-256 digest as a big-endian integer. Used as a
// compact fingerprint for vocabularies embedded in checkpoints and datasets.
std::uint64_t sha256_u64(const void* data, std::size_t len);
std::uint64_t sha256_u64(const std::string& s);

// Canonical fingerprint of a parameter set: names with shapes and raw values
// are folded into one digest. Order follows the vector as given, so callers
// pass parameters in their canonical traversal order.
struct NamedArrayView {
  std::string name;
  std::vector<int> shape;
  const double* data;
  std::size_t len;
};
std::string sha256_hex_arrays(const std::vector<NamedArrayView>& arrays);

}  // namespace etclab
