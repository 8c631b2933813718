#pragma once

#include <stdexcept>
#include <string>

namespace cotkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation precondition (bad arity, out-of-range n, ...).
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Remote backend gave up after exhausting its retry budget.
class RemoteUnavailableError : public Error {
 public:
  using Error::Error;
};

// A completion could not be segmented/parsed. Pipelines catch this, drop the
// record and bump a counter; it only escapes when a whole batch is unusable.
class MalformedCompletionError : public Error {
 public:
  using Error::Error;
};

// Step scorer returned the wrong number of scores for a trajectory.
class ScoreLengthMismatchError : public Error {
 public:
  using Error::Error;
};

class SchemaViolationError : public Error {
 public:
  SchemaViolationError(std::size_t line, std::string field, const std::string& what)
      : Error("schema violation at line " + std::to_string(line) + ", field '" + field +
              "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class ChecksumMismatchError : public Error {
 public:
  using Error::Error;
};

// Misinterpretation engine: record has neither an image nor an image_facts sidecar.
class NoVisualContentError : public Error {
 public:
  using Error::Error;
};

// Misinterpretation engine: the positive solution uses none of the extracted facts.
class NoCandidatesError : public Error {
 public:
  using Error::Error;
};

// Pair generation: every sampled completion was malformed.
class EmptyPoolError : public Error {
 public:
  using Error::Error;
};

// Synthesis: every completion for a record was filtered out.
class EmptyYieldError : public Error {
 public:
  using Error::Error;
};

}  // namespace cotkit
