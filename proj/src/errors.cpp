#include "meshsmile/errors.hpp"

namespace meshsmile {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::UpsampleRequested: return "UpsampleRequested";
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::TooFewSubjects: return "TooFewSubjects";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IndivisibleHeads: return "IndivisibleHeads";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::COutOfRange: return "COutOfRange";
    case ErrorKind::NoCurves: return "NoCurves";
    case ErrorKind::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::CsvParse: return "CsvParse";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace meshsmile
