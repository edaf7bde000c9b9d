#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace primelens {

// Base for every error raised by the library. Subclasses let callers
// distinguish retryable backend failures from data and contract errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A loaded resource violates one of its structural invariants.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Rejection sampling could not satisfy the condition constraints.
class ExhaustionError : public Error {
 public:
  using Error::Error;
};

// Wire failure; the request may succeed on retry.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

// Endpoint answered, but not with the fields we need.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Returned token spans do not tile the continuation.
class CoverageError : public Error {
 public:
  using Error::Error;
};

class TokenizationMismatch : public Error {
 public:
  using Error::Error;
};

// Closed-vocabulary oracle saw an unknown word.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

class CacheCorruption : public Error {
 public:
  CacheCorruption(std::size_t row, const std::string& what)
      : Error("cache row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Cache has no row for a requested key and no upstream to fill it.
class CacheMiss : public Error {
 public:
  using Error::Error;
};

class AlignmentMismatch : public Error {
 public:
  AlignmentMismatch(std::size_t offset, const std::string& what)
      : Error(what + " (first divergence at char " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class RankDeficiency : public Error {
 public:
  RankDeficiency(std::vector<std::string> aliased, const std::string& what)
      : Error(what), aliased_(std::move(aliased)) {}
  const std::vector<std::string>& aliased() const { return aliased_; }

 private:
  std::vector<std::string> aliased_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inputs a command needs (corpus files, cached legs) are not there yet.
class IncompleteData : public Error {
 public:
  using Error::Error;
};

}  // namespace primelens
