#pragma once

#include <stdexcept>
#include <string>

namespace tsdiff {

/// Broad failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  invalid_argument,  // bad schedule/grid/config values
  dimension,         // shape mismatch between batches
  domain,            // formula evaluated outside its domain (alpha_bar in {0,1}, ...)
  model,             // corrupted model parameters or checkpoint
  contract,          // caller broke an operation precondition
  divergence,        // NaN/Inf produced while sampling or training
  io,                // file system / parse failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::invalid_argument: return "invalid-argument";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::model: return "model";
    case ErrorCategory::contract: return "contract";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) {
  throw Error(c, what);
}

inline void require(bool ok, ErrorCategory c, const std::string& what) {
  if (!ok) fail(c, what);
}

}  // namespace tsdiff
