#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wtriage {

enum class ErrorCategory {
  Usage,
  Parse,
  Integrity,
  Ordering,
  Feature,
  Model,
  Statistics,
  Io,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Integrity: return "integrity";
    case ErrorCategory::Ordering: return "ordering";
    case ErrorCategory::Feature: return "feature";
    case ErrorCategory::Model: return "model";
    case ErrorCategory::Statistics: return "statistics";
    case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

/// Base of every error thrown by the library. The category drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::Parse,
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what)
      : Error(ErrorCategory::Integrity, what) {}
};

class OrderingError : public Error {
 public:
  explicit OrderingError(const std::string& what)
      : Error(ErrorCategory::Ordering, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorCategory::Usage, what) {}
};

class FeatureError : public Error {
 public:
  explicit FeatureError(const std::string& what)
      : Error(ErrorCategory::Feature, what) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what)
      : Error(ErrorCategory::Model, what) {}
};

class StatisticsError : public Error {
 public:
  explicit StatisticsError(const std::string& what)
      : Error(ErrorCategory::Statistics, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

}  // namespace wtriage
