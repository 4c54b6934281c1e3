#pragma once

#include <stdexcept>
#include <string>

namespace meshsmile {

// Failure categories surfaced by the library. Tests match on the kind, the
// message carries the context.
enum class ErrorKind {
  MalformedHeader,
  TruncatedPayload,
  NonFiniteValue,
  IoFailure,
  UpsampleRequested,
  DegenerateFrame,
  TooFewSubjects,
  ShapeMismatch,
  IndivisibleHeads,
  NonPositiveTemperature,
  KOutOfRange,
  COutOfRange,
  NoCurves,
  EmptyTrainSet,
  EmptyTestSet,
  DegenerateVariance,
  ConfigInvalid,
  CsvParse,
  InvariantViolation,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) fail(kind, message);
}

}  // namespace meshsmile
