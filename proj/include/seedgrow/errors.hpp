#pragma once

#include <stdexcept>
#include <string>

namespace seedgrow {

/// Malformed input file. The message names the file and the offending byte
/// offset or line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid input that violates a domain invariant (label range,
/// dimension mismatch, non-orthonormal pose, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unusable camera geometry.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage could not produce output.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seedgrow
