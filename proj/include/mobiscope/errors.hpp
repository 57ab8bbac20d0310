#pragma once

#include <stdexcept>
#include <string>

namespace mobiscope {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind { Config = 2, Data = 3, Internal = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

  static Error config(const std::string& msg) { return {ErrorKind::Config, msg}; }
  static Error data(const std::string& msg) { return {ErrorKind::Data, msg}; }
  static Error internal(const std::string& msg) { return {ErrorKind::Internal, msg}; }

 private:
  ErrorKind kind_;
};

}  // namespace mobiscope
