// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lcx {

/// Failure category. The CLI maps each kind onto a distinct exit code.
enum class ErrorKind { config, io, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& what) { throw Error(ErrorKind::config, what); }
[[noreturn]] inline void throw_io(const std::string& what) { throw Error(ErrorKind::io, what); }
[[noreturn]] inline void throw_numeric(const std::string& what) { throw Error(ErrorKind::numeric, what); }

}  // namespace lcx
