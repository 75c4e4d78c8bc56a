#include "clef/error.hpp"

namespace clef {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::BadTemperature: return "BadTemperature";
    case ErrorKind::EmptyValidRow: return "EmptyValidRow";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::TargetNotBinary: return "TargetNotBinary";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::ArchMismatch: return "ArchMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::VersionError: return "VersionError";
    case ErrorKind::ClassOverlap: return "ClassOverlap";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::EmptyInput: return "EmptyInput";
  }
  return "Unknown";
}

}  // namespace clef
