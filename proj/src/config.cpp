#include "etclab/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "etclab/errors.hpp"

namespace etclab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void parse_line(Config& cfg, const std::string& raw, const std::string& where) {
  std::string line = raw;
  const std::size_t hash = line.find('#');
  if (hash != std::string::npos) line.resize(hash);
  line = trim(line);
  if (line.empty()) return;

  const std::size_t eq = line.find('=');
  if (eq == std::string::npos)
    throw DataError("malformed config line in " + where + ": " + trim(raw));
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw DataError("malformed config line in " + where + ": " + trim(raw));
  cfg.set(key, value);
}

void load_into(Config& cfg, const std::string& path, std::set<std::string>& active) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const std::string canon = fs::weakly_canonical(fs::path(path), ec).string();
  const std::string id = ec ? path : canon;
  if (!active.insert(id).second) throw DataError("config include cycle: " + path);

  std::ifstream in(path);
  if (!in) throw DataError("cannot read config: " + path);
  const std::string dir = fs::path(path).parent_path().string();

  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.rfind("include ", 0) == 0) {
      const std::string target = trim(stripped.substr(8));
      if (target.empty()) throw DataError("malformed config line in " + path + ": " + trim(line));
      const fs::path t(target);
      load_into(cfg, t.is_absolute() || dir.empty() ? target : (fs::path(dir) / t).string(),
                active);
      continue;
    }
    parse_line(cfg, line, path);
  }
  active.erase(id);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  Config cfg;
  std::set<std::string> active;
  load_into(cfg, path, active);
  return cfg;
}

void Config::apply_overrides(const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) parse_line(*this, a, "command line");
}

void Config::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

const std::string* Config::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

std::string Config::str(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw DataError("missing config key: " + key);
  return *v;
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

namespace {

long long parse_integer(const std::string& key, const std::string& text) {
  const char* s = text.c_str();
  char* end = nullptr;
  errno = 0;
  const long long out = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0' || errno == ERANGE)
    throw DataError("config key " + key + " expects an integer, got \"" + text + "\"");
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  const char* s = text.c_str();
  char* end = nullptr;
  const double out = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw DataError("config key " + key + " expects a number, got \"" + text + "\"");
  return out;
}

}  // namespace

long long Config::integer(const std::string& key) const { return parse_integer(key, str(key)); }

long long Config::integer(const std::string& key, long long fallback) const {
  const std::string* v = find(key);
  return v ? parse_integer(key, *v) : fallback;
}

double Config::real(const std::string& key) const { return parse_real(key, str(key)); }

double Config::real(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? parse_real(key, *v) : fallback;
}

bool Config::flag(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw DataError("config key " + key + " expects true or false, got \"" + *v + "\"");
}

std::uint64_t Config::seed(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  const char* s = v->c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long out = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || errno == ERANGE || v->front() == '-')
    throw DataError("config key " + key + " expects an unsigned integer, got \"" + *v + "\"");
  return out;
}

std::string Config::dump() const {
  std::vector<std::pair<std::string, std::string>> sorted = entries_;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [k, v] : sorted) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace etclab
