#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace methanol {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Contract violation on tensor shapes; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (model, training, generation, CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A loss was requested over an empty set of supervised targets.
class EmptySupervisionError : public Error {
 public:
  using Error::Error;
};

class SequenceTooLongError : public Error {
 public:
  using Error::Error;
};

// Token id outside [0, vocab_size).
class TokenIdError : public Error {
 public:
  using Error::Error;
};

// Unsupported byte during tokenization; carries the byte offset.
class VocabularyError : public Error {
 public:
  VocabularyError(const std::string& msg, std::size_t byte_offset)
      : Error(msg), byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

// Invalid or corrupt checkpoint; carries the offending field name.
class CheckpointError : public Error {
 public:
  CheckpointError(const std::string& msg, std::string field)
      : Error(msg), field(std::move(field)) {}
  std::string field;
};

// Rule-based extraction received an empty required field.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

// Completion-provider failure. Retryable means the caller may try again
// (timeouts, connection errors, 5xx); non-retryable means a permanent
// rejection (4xx, missing credentials).
class ProviderError : public Error {
 public:
  ProviderError(const std::string& msg, bool retryable)
      : Error(msg), retryable(retryable) {}
  bool retryable;
};

// The provider answered but the annotation could not be parsed; carries
// the raw response text for inspection.
class AnnotationParseError : public Error {
 public:
  AnnotationParseError(const std::string& msg, std::string raw)
      : Error(msg), raw(std::move(raw)) {}
  std::string raw;
};

// Training produced a non-finite loss; carries the step number.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, long step) : Error(msg), step(step) {}
  long step;
};

// The finite-difference oracle hit a non-finite function value.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace methanol
