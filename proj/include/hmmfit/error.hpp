#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmmfit {

enum class ErrorCode {
  DegenerateTPM,
  NonPositiveRate,
  NumericOverflow,
  SingularSystem,
  DomainError,
  NonFiniteLikelihood,
  MapShapeMismatch,
  SingularHessian,
  NotConverged,
  ParseError,
  EmptyData,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `code()` is stable and used by the CLI for
/// machine-readable error output.
class HmmError : public std::runtime_error {
 public:
  HmmError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hmmfit
