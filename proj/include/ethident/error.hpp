#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ethident {

enum class ErrorKind {
  MissingColumn,
  NonNumericValue,
  NegativeAmount,
  EmptyAccountId,
  InvalidField,
  DuplicateConflictingLabel,
  UnknownNode,
  InsufficientNegatives,
  ResampleWithoutGraph,
  ShapeMismatch,
  NonFiniteValue,
  EmptySegment,
  ZeroVector,
  EmptySplit,
  NonFiniteLoss,
  SingleClassFold,
  DegenerateLabels,
  Format,
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind and, where it comes
// from tabular input, the 1-based row it was found at (0 = not row bound).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::size_t row = 0);

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t row() const noexcept { return row_; }

 private:
  ErrorKind kind_;
  std::size_t row_;
};

}  // namespace ethident
