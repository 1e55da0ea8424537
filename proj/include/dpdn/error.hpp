#pragma once

#include <stdexcept>
#include <string>

namespace dpdn {

enum class ErrorCode {
  kShape,    // tensor or image dimensions disagree
  kNumeric,  // division by (near) zero and similar
  kState,    // object used in the wrong state, e.g. missing gradient
  kDomain,   // input outside the mathematical domain of an operation
  kConfig,   // invalid configuration or parameters
  kIo,       // unreadable or malformed files
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kNumeric: return "E_NUMERIC";
    case ErrorCode::kState: return "E_STATE";
    case ErrorCode::kDomain: return "E_DOMAIN";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

}  // namespace dpdn
