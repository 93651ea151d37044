#pragma once

#include <stdexcept>
#include <string>

namespace tranclr {

// Invalid user or file configuration (unknown layout, infeasible ranges, bad keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dataset entry could not be located or read.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed record; carries the byte offset / line where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long long offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

// Operation called in a state where it is undefined (e.g. top-k on an empty queue).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a numeric precondition (e.g. non-normalised key pushed into the queue).
class ContractViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tranclr
