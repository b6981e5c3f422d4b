#include "creep/error.hpp"

namespace creep {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NoSuchTemperature: return "NoSuchTemperature";
    case ErrorKind::NegativeTime: return "NegativeTime";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::RaggedGroups: return "RaggedGroups";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::UnknownValidationKey: return "UnknownValidationKey";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::MaxLengthExceeded: return "MaxLengthExceeded";
    case ErrorKind::HeadDivisibility: return "HeadDivisibility";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace creep
