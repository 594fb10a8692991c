#pragma once

#include <stdexcept>
#include <string>

namespace fedquad {

enum class ErrorCategory {
  kConfig,
  kData,
  kNumeric,
  kIo,
  kInput,
  kState,
};

// Process exit code for a categorized failure (0 is reserved for success).
int exit_code(ErrorCategory category);
const char* category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

// Shape mismatches, out-of-range labels and similar caller mistakes.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::kInput, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCategory::kState, what) {}
};

// Rethrows `e` as the same concrete error type with `context` prepended.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context);

}  // namespace fedquad
