#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "assimlab/binary_io.hpp"
#include "assimlab/error.hpp"

namespace assimlab {

/// Flat `key = value` configuration. Values are typed on access; every key read
/// is recorded with its resolved value so the full effective config can be written
/// back out. Keys present in the source but never read are rejected by finish().
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, std::string source = "config") {
    Config c;
    c.source_ = std::move(source);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string line(text.substr(pos, eol - pos));
      pos = eol + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) c.fail(line_no, "expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) c.fail(line_no, "empty key");
      for (char ch : key) {
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.')) {
          c.fail(line_no, "invalid key '" + key + "'");
        }
      }
      if (c.entries_.count(key)) c.fail(line_no, "duplicate key '" + key + "'");
      c.entries_[key] = {value, line_no, false};
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    Config c = parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
    c.base_dir_ = std::filesystem::absolute(path).parent_path();
    return c;
  }

  /// Command-line override; replaces or adds a key.
  void set(const std::string& key, const std::string& value) {
    auto& e = entries_[key];
    e.value = value;
    e.line = 0;
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) { return resolve(key, fallback); }

  std::string required(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    return resolve(key, "");
  }

  /// Filesystem path; relative values resolve against the config file's directory.
  std::filesystem::path path(const std::string& key, const std::string& fallback = "") {
    auto it = entries_.find(key);
    if (it == entries_.end() && fallback.empty()) {
      resolved_[key] = "";
      return {};
    }
    std::filesystem::path p = it == entries_.end() ? fallback : it->second.value;
    if (it != entries_.end()) it->second.used = true;
    if (!p.empty() && p.is_relative()) p = base_dir_ / p;
    p = p.empty() ? p : std::filesystem::weakly_canonical(p);
    resolved_[key] = p.string();
    return p;
  }

  /// Comma-separated list of paths, each resolved like path().
  std::vector<std::filesystem::path> paths(const std::string& key) {
    std::vector<std::filesystem::path> out;
    std::string joined;
    for (const auto& w : split(resolve(key, ""))) {
      std::filesystem::path p = w;
      if (p.is_relative()) p = base_dir_ / p;
      out.push_back(std::filesystem::weakly_canonical(p));
      joined += (joined.empty() ? "" : ",") + out.back().string();
    }
    resolved_[key] = joined;
    return out;
  }

  double real(const std::string& key, double fallback) {
    const std::string v = resolve(key, format(fallback));
    return to_real(key, v);
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(to_u64(key, resolve(key, std::to_string(fallback))));
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    return to_u64(key, resolve(key, std::to_string(fallback)));
  }

  bool flag(const std::string& key, bool fallback) {
    const std::string v = resolve(key, fallback ? "true" : "false");
    bool out = false;
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
      out = true;
    } else if (!(v == "false" || v == "0" || v == "no" || v == "off")) {
      fail_key(key, "expected a boolean, got '" + v + "'");
    }
    resolved_[key] = out ? "true" : "false";
    return out;
  }

  std::vector<std::string> words(const std::string& key, const std::string& fallback) {
    return split(resolve(key, fallback));
  }

  std::vector<std::size_t> counts(const std::string& key, const std::string& fallback) {
    std::vector<std::size_t> out;
    for (const auto& w : split(resolve(key, fallback))) out.push_back(static_cast<std::size_t>(to_u64(key, w)));
    return out;
  }

  std::vector<double> reals(const std::string& key, const std::string& fallback) {
    std::vector<double> out;
    for (const auto& w : split(resolve(key, fallback))) out.push_back(to_real(key, w));
    return out;
  }

  /// Rejects keys that no accessor consumed.
  void finish() const {
    for (const auto& [key, e] : entries_) {
      if (e.used) continue;
      if (e.line) throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + key + "'");
      throw ConfigError(source_ + ": unknown key '" + key + "'");
    }
  }

  /// Every resolved key in sorted order, one `key = value` line each.
  std::string resolved_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : resolved_) os << k << " = " << v << "\n";
    return os.str();
  }

  const std::string& source() const { return source_; }

  static std::string format(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
  };

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
      cur = trim(cur);
      if (!cur.empty()) out.push_back(cur);
    }
    return out;
  }

  std::string resolve(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    std::string v = fallback;
    if (it != entries_.end()) {
      it->second.used = true;
      v = it->second.value;
    }
    resolved_[key] = v;
    return v;
  }

  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + what);
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& what) const {
    auto it = entries_.find(key);
    if (it != entries_.end() && it->second.line) fail(it->second.line, key + ": " + what);
    throw ConfigError(source_ + ": " + key + ": " + what);
  }

  double to_real(const std::string& key, const std::string& v) const {
    double out = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail_key(key, "expected a number, got '" + v + "'");
    return out;
  }

  std::uint64_t to_u64(const std::string& key, const std::string& v) const {
    std::uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      fail_key(key, "expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> resolved_;
  std::string source_ = "config";
  std::filesystem::path base_dir_ = std::filesystem::current_path();
};

}  // namespace assimlab
