#include "ethident/error.hpp"

namespace ethident {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonNumericValue: return "NonNumericValue";
    case ErrorKind::NegativeAmount: return "NegativeAmount";
    case ErrorKind::EmptyAccountId: return "EmptyAccountId";
    case ErrorKind::InvalidField: return "InvalidField";
    case ErrorKind::DuplicateConflictingLabel: return "DuplicateConflictingLabel";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorKind::ResampleWithoutGraph: return "ResampleWithoutGraph";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptySegment: return "EmptySegment";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::SingleClassFold: return "SingleClassFold";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::Format: return "Format";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

namespace {
std::string decorate(const std::string& message, std::size_t row) {
  if (row == 0) return message;
  return "row " + std::to_string(row) + ": " + message;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::size_t row)
    : std::runtime_error(decorate(message, row)), kind_(kind), row_(row) {}

}  // namespace ethident
