#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flatpi {

enum class ErrorCode {
  DomainError,
  NonFinite,
  EpsilonTooLarge,
  FormatError,
  EmptyUnion,
  OriginExcluded,
  OriginOnBoundary,
  BigMTooSmall,
  NodeBudget,
  NotControllable,
  NotHurwitz,
  SingularPencil,
  InfeasibleFilter,
  InfeasibleMPC,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. The code drives CLI exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flatpi
