#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mobiscope::toml {

// Parser for the TOML subset the config files use: [section] headers,
// key = value pairs, # comments, and values that are double-quoted strings
// (no escapes), integers, floats, booleans, or single-line arrays of those.
// Keys are addressed as "section.key" ("key" alone before any section).

struct Value {
  enum class Kind { String, Int, Float, Bool, Array };

  Kind kind = Kind::String;
  std::string str;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::vector<Value> items;
};

class Table {
 public:
  static Table parse_file(const std::string& path);
  static Table parse(std::string_view text, const std::string& origin);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  // Typed getters. The no-default forms require the key; every form throws
  // a config error when the stored value has the wrong type.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key) const;  // ints promote
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_string_array(const std::string& key) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<int64_t> get_int_array(const std::string& key) const;

  std::vector<std::string> keys() const;

 private:
  const Value& require(const std::string& key) const;
  [[noreturn]] void type_error(const std::string& key, const char* wanted) const;

  std::string origin_;
  std::map<std::string, Value> entries_;
};

}  // namespace mobiscope::toml
