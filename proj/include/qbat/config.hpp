#pragma once

// Run configuration: a small TOML-like key/value document.
//
//   # comment
//   [section]
//   key = 1.5
//   name = "text"
//   list = [16, 18, 20]
//   flag = true
//
// Keys are addressed as "section.key". Relative paths in a file resolve
// against that file's directory; overrides resolve against the working
// directory.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "parameters.hpp"

namespace qbat {

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'", "missing_path");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what(), "invalid_json");
  }
}

inline ParameterSet load_parameters(const std::string& path) { return parameters_from_json(load_json(path)); }

class Config {
public:
  Config() = default;

  static Config parse(std::istream& in, const std::string& origin = "<config>", const std::string& base_dir = "") {
    Config c;
    std::string line, section;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      line = trim(strip_comment(line));
      if (line.empty()) continue;
      auto fail = [&](const std::string& what) {
        throw InputError(origin + ":" + std::to_string(row) + ": " + what, "invalid_config");
      };
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) fail("malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) fail("empty key");
      nlohmann::json v;
      if (!parse_value(trim(line.substr(eq + 1)), v)) fail("cannot parse value of '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (c.entries_.count(full)) fail("duplicate key '" + full + "'");
      c.entries_[full] = {std::move(v), base_dir, false};
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config '" + path + "'", "missing_path");
    const auto dir = std::filesystem::absolute(path).parent_path().string();
    return parse(in, path, dir);
  }

  /// `key=value` from the command line; unparseable values are taken as strings.
  void set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
      throw InputError("override '" + assignment + "' must be key=value", "invalid_config");
    const std::string key = trim(assignment.substr(0, eq));
    const std::string raw = trim(assignment.substr(eq + 1));
    nlohmann::json v;
    if (!parse_value(raw, v)) v = raw;
    entries_[key] = {std::move(v), "", false};
  }

  void set(const std::string& key, nlohmann::json v) { entries_[key] = {std::move(v), "", false}; }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  template <class T>
  T get(const std::string& key) const {
    const auto& e = entry(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!e.value.is_number()) throw nlohmann::json::type_error::create(302, "not a number", nullptr);
      }
      return e.value.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError("config key '" + key + "' has the wrong type", "invalid_config");
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  /// String value interpreted as a path.
  std::string path(const std::string& key) const {
    const auto& e = entry(key);
    if (!e.value.is_string()) throw InputError("config key '" + key + "' must be a string path", "invalid_config");
    std::filesystem::path p(e.value.get<std::string>());
    if (p.is_relative() && !e.base.empty()) p = std::filesystem::path(e.base) / p;
    return p.lexically_normal().string();
  }

  std::string path_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? path(key) : fallback;
  }

  std::vector<std::string> paths(const std::string& key) const {
    const auto& e = entry(key);
    if (!e.value.is_array()) throw InputError("config key '" + key + "' must be a list of paths", "invalid_config");
    std::vector<std::string> out;
    for (const auto& v : e.value) {
      if (!v.is_string()) throw InputError("config key '" + key + "' must be a list of paths", "invalid_config");
      std::filesystem::path p(v.get<std::string>());
      if (p.is_relative() && !e.base.empty()) p = std::filesystem::path(e.base) / p;
      out.push_back(p.lexically_normal().string());
    }
    return out;
  }

  /// Keys present in the document but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_)
      if (!e.used) out.push_back(k);
    return out;
  }

  /// Keys under `prefix.`, without the prefix.
  std::vector<std::string> keys_under(const std::string& prefix) const {
    std::vector<std::string> out;
    const std::string pre = prefix + ".";
    for (const auto& [k, e] : entries_)
      if (k.rfind(pre, 0) == 0) out.push_back(k.substr(pre.size()));
    return out;
  }

private:
  struct Entry {
    nlohmann::json value;
    std::string base;
    mutable bool used = false;
  };
  std::map<std::string, Entry> entries_;

  const Entry& entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw InputError("missing config key '" + key + "'", "invalid_config");
    it->second.used = true;
    return it->second;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] == '"' && (k == 0 || s[k - 1] != '\\')) quoted = !quoted;
      if (s[k] == '#' && !quoted) return s.substr(0, k);
    }
    return s;
  }

  // Values are a subset of JSON plus bare true/false; a TOML-style list or
  // string is also valid JSON, so the JSON parser does the work.
  static bool parse_value(const std::string& raw, nlohmann::json& out) {
    if (raw.empty()) return false;
    try {
      out = nlohmann::json::parse(raw);
      return !out.is_object() && !out.is_null();
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  }
};

}  // namespace qbat
