#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace mobiscope::csv {

// Line-oriented reader for the comma-separated registries. All files are
// UTF-8 with a mandatory header row; fields carry no quoting or escapes.
class Reader {
 public:
  Reader(const std::string& path, const std::vector<std::string>& expected_header);

  // Fills fields with views into an internal buffer (valid until the next
  // call). Returns false at end of file. Blank lines are skipped.
  bool next(std::vector<std::string_view>& fields);

  size_t line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

  // Context-carrying parse helpers; a failure names the file and line.
  double field_double(std::string_view v, std::string_view col) const;
  // Same, but lets "nan" through; for columns where NaN marks "undefined".
  double field_double_or_nan(std::string_view v, std::string_view col) const;
  int64_t field_int(std::string_view v, std::string_view col) const;
  bool field_bool01(std::string_view v, std::string_view col) const;
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  std::string path_;
  std::ifstream in_;
  std::string line_;
  size_t line_no_ = 0;
  size_t n_cols_ = 0;
};

void split_fields(std::string_view line, std::vector<std::string_view>& out);

// Deterministic table writer: fixed decimal formats, '\n' line ends, no
// locale involvement. Identical rows always produce identical bytes.
class Writer {
 public:
  Writer(const std::string& path, std::string_view header);
  ~Writer();

  void raw_row(std::string_view row);
  uint64_t rows_written() const { return rows_; }
  void close();

 private:
  std::string path_;
  std::ofstream out_;
  uint64_t rows_ = 0;
};

// snprintf-backed float formatting; NaN prints as "nan".
std::string fmt_fixed(double v, int decimals);
void append_fixed(std::string& s, double v, int decimals);
void append_int(std::string& s, int64_t v);

// Round-trip-exact double formatting (17 significant digits).
void append_g17(std::string& s, double v);

}  // namespace mobiscope::csv
