#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace segae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, spacings or index ranges that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A voxel that no patch covers during assembly.
class CoverageError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file content (NIfTI headers, checkpoints, JSON).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (empty masks, non-finite values).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values met during optimization. Carries the optimizer step.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::int64_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace segae
