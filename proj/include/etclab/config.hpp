#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace etclab {

// Flat key=value configuration. Files may pull in other files with
// `include <path>`; later assignments win, so an including file overrides
// whatever it included before the directive ran. Keys keep first-seen order
// for diff-friendly dumps.
class Config {
 public:
  static Config from_file(const std::string& path);

  // Parses `key=value` strings from the command line on top of the current
  // contents. Malformed items raise DataError.
  void apply_overrides(const std::vector<std::string>& assignments);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  // Typed getters. The no-default forms require the key; all forms raise
  // DataError when the stored text does not parse as the requested type.
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  long long integer(const std::string& key) const;
  long long integer(const std::string& key, long long fallback) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;

  // One sorted `key=value` line per entry; the manifest format.
  std::string dump() const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace etclab
