#pragma once

#include <stdexcept>
#include <string>

namespace bhealth {

/// Bad input, bad configuration, or a violated precondition. The CLI maps
/// these to exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DatasetNotFound : public ValidationError {
 public:
  explicit DatasetNotFound(const std::string& path)
      : ValidationError("dataset not found: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// SoH trajectory never crosses the EOL threshold.
class EolUndetermined : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// IC curve or feature extraction cannot produce a result for this cycle.
class FeatureError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Factorization or optimization failure at run time (exit status 1).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log_warning(const std::string& message);

}  // namespace bhealth
