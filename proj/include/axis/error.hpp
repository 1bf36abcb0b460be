#pragma once

#include <stdexcept>
#include <string>

namespace axis {

enum class ErrorCode {
  InvalidInput,
  ShapeMismatch,
  SchemaMismatch,
  EmptyInput,
  InvalidStrategy,
  DegenerateLayer,
  DivergenceDetected,
  IoError,
  FormatError,
  CorruptFile,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidStrategy: return "InvalidStrategy";
    case ErrorCode::DegenerateLayer: return "DegenerateLayer";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::CorruptFile: return "CorruptFile";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace axis
