#pragma once

#include <stdexcept>
#include <string>

namespace cotprobe {

// Error taxonomy maps onto CLI exit codes: config/parse/validation -> 2,
// backend exhaustion -> 3, integrity -> 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

// Retryable transport-level failure (connection refused, 5xx, 429).
class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& msg) : BackendError(msg) {}
};

class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cotprobe
