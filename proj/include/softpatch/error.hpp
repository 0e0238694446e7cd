#pragma once

#include <stdexcept>
#include <string>

namespace softpatch {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorKind { input = 2, format = 3, infeasible = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Bad arguments, missing files, shape mismatches, violated preconditions.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

/// Malformed on-disk data (bad magic, truncated payload, ...).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

/// The request is well-formed but cannot be satisfied by the data.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(ErrorKind::infeasible, what) {}
};

}  // namespace softpatch
