#pragma once

#include <stdexcept>
#include <string>

namespace epidenet {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape violations (mismatched channels, bad extents, ...).
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (model, loss, training, CLI).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or truncated on-disk artifacts (EDF, checkpoints, bundles, caches).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Semantically invalid data (bad annotations, impossible placements, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

}  // namespace epidenet
