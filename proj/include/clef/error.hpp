#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clef {

enum class ErrorKind {
  ZeroRow,
  NotScalar,
  NonFinite,
  ShapeMismatch,
  ConfigError,
  ParseError,
  SchemaError,
  BatchTooSmall,
  IndexOutOfRange,
  EmptySet,
  TokenOutOfRange,
  LengthMismatch,
  BadTemperature,
  EmptyValidRow,
  SizeMismatch,
  TargetOutOfRange,
  TargetNotBinary,
  EmptyDataset,
  StepOutOfRange,
  ArchMismatch,
  IoError,
  FormatError,
  VersionError,
  ClassOverlap,
  TooFewSamples,
  EmptyInput,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries its kind; what() starts with the
// kind name so command-line diagnostics can be grepped.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace clef
