#pragma once

#include <stdexcept>
#include <string>

namespace weldcam {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated precondition.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (backward before forward, untrained model).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A graph input needed by the requested outputs was not fed.
class UnresolvedInputError : public Error {
 public:
  using Error::Error;
};

/// Model lacks a structural feature the caller needs (e.g. the Grad-CAM hook).
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped at its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Container file errors. Each failure mode has its own type so callers can
// tell a corrupted download from a version skew.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Pipeline failure annotated with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace weldcam
