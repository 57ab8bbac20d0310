#include "mobiscope/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mobiscope/errors.hpp"

namespace mobiscope::toml {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Cuts an unquoted '#' comment; quotes carry no escapes.
std::string_view strip_comment(std::string_view line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

struct Cursor {
  std::string_view text;
  const std::string& origin;
  size_t line;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error::config(origin + ":" + std::to_string(line) + ": " + msg);
  }

  void skip_space() {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  }
};

Value parse_scalar(Cursor& cur);

Value parse_value(Cursor& cur) {
  cur.skip_space();
  if (cur.text.empty()) cur.fail("missing value");
  if (cur.text.front() == '[') {
    cur.text.remove_prefix(1);
    Value v;
    v.kind = Value::Kind::Array;
    cur.skip_space();
    if (!cur.text.empty() && cur.text.front() == ']') {
      cur.text.remove_prefix(1);
      return v;
    }
    while (true) {
      v.items.push_back(parse_scalar(cur));
      cur.skip_space();
      if (cur.text.empty()) cur.fail("unterminated array");
      const char c = cur.text.front();
      cur.text.remove_prefix(1);
      if (c == ']') break;
      if (c != ',') cur.fail("expected ',' or ']' in array");
    }
    return v;
  }
  return parse_scalar(cur);
}

Value parse_scalar(Cursor& cur) {
  cur.skip_space();
  if (cur.text.empty()) cur.fail("missing value");
  Value v;
  if (cur.text.front() == '"') {
    cur.text.remove_prefix(1);
    const size_t end = cur.text.find('"');
    if (end == std::string_view::npos) cur.fail("unterminated string");
    v.kind = Value::Kind::String;
    v.str = std::string(cur.text.substr(0, end));
    cur.text.remove_prefix(end + 1);
    return v;
  }
  size_t len = 0;
  while (len < cur.text.size() && cur.text[len] != ',' && cur.text[len] != ']' &&
         cur.text[len] != ' ' && cur.text[len] != '\t') {
    ++len;
  }
  const std::string_view tok = cur.text.substr(0, len);
  cur.text.remove_prefix(len);
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::Bool;
    v.b = tok == "true";
    return v;
  }
  if (tok.find_first_of(".eE") == std::string_view::npos || tok.substr(0, 2) == "0x") {
    int64_t i = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
    if (ec == std::errc() && p == tok.data() + tok.size()) {
      v.kind = Value::Kind::Int;
      v.i = i;
      v.f = static_cast<double>(i);
      return v;
    }
  }
  double f = 0.0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), f);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    cur.fail("cannot parse value '" + std::string(tok) + "'");
  }
  v.kind = Value::Kind::Float;
  v.f = f;
  return v;
}

}  // namespace

Table Table::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::config("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

Table Table::parse(std::string_view text, const std::string& origin) {
  Table t;
  t.origin_ = origin;
  std::string section;
  size_t line_no = 0;
  while (!text.empty()) {
    size_t eol = text.find('\n');
    std::string_view raw = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);

    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    Cursor cur{line, origin, line_no};

    if (line.front() == '[') {
      if (line.back() != ']') cur.fail("unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) cur.fail("invalid section name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) cur.fail("expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_key(key)) cur.fail("invalid key '" + std::string(key) + "'");
    cur.text = line.substr(eq + 1);
    const Value v = parse_value(cur);
    cur.skip_space();
    if (!cur.text.empty()) cur.fail("trailing content after value");

    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (!t.entries_.emplace(full, v).second) cur.fail("duplicate key '" + full + "'");
  }
  return t;
}

const Value& Table::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw Error::config(origin_ + ": missing required key '" + key + "'");
  }
  return it->second;
}

void Table::type_error(const std::string& key, const char* wanted) const {
  throw Error::config(origin_ + ": key '" + key + "' is not a " + wanted);
}

std::string Table::get_string(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::String) type_error(key, "string");
  return v.str;
}

std::string Table::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

int64_t Table::get_int(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Int) type_error(key, "integer");
  return v.i;
}

int64_t Table::get_int(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double Table::get_double(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Int && v.kind != Value::Kind::Float) type_error(key, "number");
  return v.f;
}

double Table::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool Table::get_bool(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Bool) type_error(key, "boolean");
  return v.b;
}

bool Table::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<std::string> Table::get_string_array(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Array) type_error(key, "array");
  std::vector<std::string> out;
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::String) type_error(key, "string array");
    out.push_back(item.str);
  }
  return out;
}

std::vector<double> Table::get_double_array(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Array) type_error(key, "array");
  std::vector<double> out;
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::Int && item.kind != Value::Kind::Float) {
      type_error(key, "numeric array");
    }
    out.push_back(item.f);
  }
  return out;
}

std::vector<int64_t> Table::get_int_array(const std::string& key) const {
  const Value& v = require(key);
  if (v.kind != Value::Kind::Array) type_error(key, "array");
  std::vector<int64_t> out;
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::Int) type_error(key, "integer array");
    out.push_back(item.i);
  }
  return out;
}

std::vector<std::string> Table::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

}  // namespace mobiscope::toml
