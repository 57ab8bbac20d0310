#include "mobiscope/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>

#include "mobiscope/errors.hpp"

namespace mobiscope::csv {

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

Reader::Reader(const std::string& path, const std::vector<std::string>& expected_header)
    : path_(path), in_(path) {
  if (!in_) {
    throw Error::data("cannot open " + path);
  }
  if (!std::getline(in_, line_)) {
    throw Error::data(path + ": empty file, expected a header row");
  }
  ++line_no_;
  if (!line_.empty() && line_.back() == '\r') line_.pop_back();
  std::vector<std::string_view> cols;
  split_fields(line_, cols);
  if (cols.size() != expected_header.size()) {
    fail("header has " + std::to_string(cols.size()) + " columns, expected " +
         std::to_string(expected_header.size()));
  }
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] != expected_header[i]) {
      fail("header column " + std::to_string(i + 1) + " is '" + std::string(cols[i]) +
           "', expected '" + expected_header[i] + "'");
    }
  }
  n_cols_ = expected_header.size();
}

bool Reader::next(std::vector<std::string_view>& fields) {
  while (std::getline(in_, line_)) {
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    if (line_.empty()) continue;
    split_fields(line_, fields);
    if (fields.size() != n_cols_) {
      fail("row has " + std::to_string(fields.size()) + " fields, expected " +
           std::to_string(n_cols_));
    }
    return true;
  }
  return false;
}

void Reader::fail(const std::string& msg) const {
  throw Error::data(path_ + ":" + std::to_string(line_no_) + ": " + msg);
}

double Reader::field_double(std::string_view v, std::string_view col) const {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    fail("column " + std::string(col) + ": bad number '" + std::string(v) + "'");
  }
  return out;
}

double Reader::field_double_or_nan(std::string_view v, std::string_view col) const {
  if (v == "nan" || v == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return field_double(v, col);
}

int64_t Reader::field_int(std::string_view v, std::string_view col) const {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    fail("column " + std::string(col) + ": bad integer '" + std::string(v) + "'");
  }
  return out;
}

bool Reader::field_bool01(std::string_view v, std::string_view col) const {
  if (v == "0") return false;
  if (v == "1") return true;
  fail("column " + std::string(col) + ": expected 0 or 1, got '" + std::string(v) + "'");
}

Writer::Writer(const std::string& path, std::string_view header) : path_(path), out_(path) {
  if (!out_) {
    throw Error::data("cannot open " + path + " for writing");
  }
  out_ << header << '\n';
}

Writer::~Writer() {
  if (out_.is_open()) close();
}

void Writer::raw_row(std::string_view row) {
  out_ << row << '\n';
  ++rows_;
}

void Writer::close() {
  out_.close();
  if (out_.fail()) {
    throw Error::data("write failed for " + path_);
  }
}

std::string fmt_fixed(double v, int decimals) {
  std::string s;
  append_fixed(s, v, decimals);
  return s;
}

void append_fixed(std::string& s, double v, int decimals) {
  if (std::isnan(v)) {
    s += "nan";
    return;
  }
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  s.append(buf, static_cast<size_t>(n));
}

void append_int(std::string& s, int64_t v) {
  char buf[24];
  const int n = std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
  s.append(buf, static_cast<size_t>(n));
}

void append_g17(std::string& s, double v) {
  if (std::isnan(v)) {
    s += "nan";
    return;
  }
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  s.append(buf, static_cast<size_t>(n));
}

}  // namespace mobiscope::csv
