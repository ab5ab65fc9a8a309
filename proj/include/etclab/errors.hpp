#pragma once

#include <stdexcept>
#include <string>

namespace etclab {

// Bad input files, malformed records, mismatched vocabularies. Exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradients during training. Exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace etclab
