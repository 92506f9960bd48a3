#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace delaysense {

enum class ErrorCode {
  // domain
  OutOfScale,
  EmptyIdentifier,
  UnknownCharacteristic,
  MissingCell,
  DuplicateRating,
  // statistics
  DegenerateMatrix,
  ZeroVariance,
  DomainError,
  ConstantColumn,
  NotSymmetric,
  NoConvergence,
  TooFewGames,
  TooFewDistinctPoints,
  SingleCluster,
  // tree / evaluation
  EmptyNode,
  MissingFeature,
  LengthMismatch,
  EmptyConfusion,
  // study service
  InvalidSize,
  ValidationError,
  UnknownStudy,
  UnknownSession,
  StudyClosed,
  MissingCharacteristic,
  MissingRationale,
  AlreadyPassed,
  TrainingNotPassed,
  OutOfOrder,
  DuplicateSubmission,
  CorruptLog,
  // io
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfScale: return "OutOfScale";
    case ErrorCode::EmptyIdentifier: return "EmptyIdentifier";
    case ErrorCode::UnknownCharacteristic: return "UnknownCharacteristic";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::DuplicateRating: return "DuplicateRating";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::TooFewGames: return "TooFewGames";
    case ErrorCode::TooFewDistinctPoints: return "TooFewDistinctPoints";
    case ErrorCode::SingleCluster: return "SingleCluster";
    case ErrorCode::EmptyNode: return "EmptyNode";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyConfusion: return "EmptyConfusion";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownStudy: return "UnknownStudy";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::StudyClosed: return "StudyClosed";
    case ErrorCode::MissingCharacteristic: return "MissingCharacteristic";
    case ErrorCode::MissingRationale: return "MissingRationale";
    case ErrorCode::AlreadyPassed: return "AlreadyPassed";
    case ErrorCode::TrainingNotPassed: return "TrainingNotPassed";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::DuplicateSubmission: return "DuplicateSubmission";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Errors caused by bad input data, as opposed to internal failures.
/// The CLI maps these to exit status 2.
constexpr bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoConvergence:
    case ErrorCode::IoError:
    case ErrorCode::CorruptLog:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace delaysense
