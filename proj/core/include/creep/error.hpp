#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace creep {

enum class ErrorKind {
  NoSuchTemperature,
  NegativeTime,
  InvalidGrid,
  IoFailure,
  DomainError,
  RaggedGroups,
  EmptyInput,
  UnknownValidationKey,
  ShapeMismatch,
  NonScalarLoss,
  InvalidProbability,
  MaxLengthExceeded,
  HeadDivisibility,
  InvalidK,
  DegenerateVariance,
  NonFiniteLoss,
  ArchitectureMismatch,
  InvalidArgument,
  FormatError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (notably the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace creep
