// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mdunet {

/// Failure categories. The numeric values are shared with the C API status
/// codes and the CLI exit codes.
enum class ErrorKind : int {
  InvalidArgument = 1,
  InvalidConfig = 2,
  MissingData = 3,
  Divergence = 4,
  ShapeMismatch = 5,
  Io = 6,
  Internal = 7,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace mdunet
