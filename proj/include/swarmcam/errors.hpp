#pragma once

#include <stdexcept>
#include <string>

namespace swarmcam {

/// Base of every error the library raises. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Input values or dimensions outside an operation's domain.
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// API misuse, e.g. backward from a non-scalar or from a released graph.
class ContractError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }
  int exit_code() const noexcept override { return 5; }

 private:
  int epoch_;
};

}  // namespace swarmcam
