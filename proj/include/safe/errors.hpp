#pragma once

#include <stdexcept>
#include <string>

namespace safe {

// Process exit codes used by the CLI.
enum class ExitCode : int { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ExitCode code() const noexcept { return code_; }
  [[nodiscard]] virtual const char* kind() const noexcept = 0;

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
  const char* kind() const noexcept override { return "config"; }
};

// Malformed arguments to an in-process call (shape mismatch, empty batch...).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ExitCode::kData, what) {}
  const char* kind() const noexcept override { return "input"; }
};

// Dataset files that cannot be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long long offset)
      : Error(ExitCode::kData, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  [[nodiscard]] long long offset() const noexcept { return offset_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  long long offset_;
};

class StreamError : public Error {
 public:
  explicit StreamError(const std::string& what) : Error(ExitCode::kData, what) {}
  const char* kind() const noexcept override { return "stream"; }
};

class StatsError : public Error {
 public:
  explicit StatsError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
  const char* kind() const noexcept override { return "stats"; }
};

// A deletion would leave a class with too few points for a usable covariance.
class ClassExhaustionError : public StatsError {
 public:
  ClassExhaustionError(int label, const std::string& what) : StatsError(what), label_(label) {}
  [[nodiscard]] int label() const noexcept { return label_; }
  const char* kind() const noexcept override { return "class_exhaustion"; }

 private:
  int label_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
  const char* kind() const noexcept override { return "numerical"; }
};

}  // namespace safe
