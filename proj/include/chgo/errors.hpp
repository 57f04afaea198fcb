#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace chgo {

// Unsupported board size, bad flag values and similar setup problems.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Asking a question the position cannot answer (e.g. liberties of an empty point).
class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A data file on disk is not what its header claims.
class CorruptionError : public std::runtime_error {
 public:
  CorruptionError(std::string file, const std::string& what)
      : std::runtime_error(file + ": " + what), file_(std::move(file)) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

// Network fetch failed; callers may retry.
class FetchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chgo
