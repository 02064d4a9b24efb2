#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "patchnet/error.hpp"

namespace patchnet {

// Canonical key-value text: one `key = value` per line, dotted keys,
// '#' comments, keys emitted in sorted order. Used for config files,
// corpus specs and evaluation reports. All number formatting goes through
// std::to_chars so output is locale-free and byte-reproducible.

inline std::string format_double(double v, int significant_digits = 17) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, significant_digits);
  return std::string(buf, res.ptr);
}

inline std::string format_int(std::int64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

class KvMap {
 public:
  void set(const std::string& key, const std::string& value) { map_[key] = value; }
  void set_double(const std::string& key, double v) { map_[key] = format_double(v); }
  void set_int(const std::string& key, std::int64_t v) { map_[key] = format_int(v); }

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = map_.find(key);
    require(it != map_.end(), ErrorCode::BadInput, "missing key: " + key);
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = map_.find(key);
    return it == map_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& s = get(key);
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
            ErrorCode::BadInput, "not a number for key " + key + ": " + s);
    return v;
  }

  std::int64_t get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc() && res.ptr == s.data() + s.size(),
            ErrorCode::BadInput, "not an integer for key " + key + ": " + s);
    return v;
  }

  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  // Keys are stored sorted; serialization is canonical byte-for-byte.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : map_) os << k << " = " << v << "\n";
    return os.str();
  }

  static KvMap parse(std::string_view text, const std::string& origin = "<text>") {
    KvMap kv;
    size_t lineno = 0;
    for (const std::string& raw : split(text, '\n')) {
      ++lineno;
      std::string_view line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      size_t eq = line.find('=');
      require(eq != std::string_view::npos, ErrorCode::BadInput,
              origin + ":" + format_int(static_cast<std::int64_t>(lineno)) +
                  ": expected 'key = value'");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      require(!key.empty(), ErrorCode::BadInput,
              origin + ":" + format_int(static_cast<std::int64_t>(lineno)) + ": empty key");
      kv.map_[key] = value;
    }
    return kv;
  }

  static KvMap load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
    out << serialize();
  }

  const std::map<std::string, std::string>& entries() const { return map_; }

 private:
  std::map<std::string, std::string> map_;
};

}  // namespace patchnet
