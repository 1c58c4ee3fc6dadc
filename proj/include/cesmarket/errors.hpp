#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cesmarket {

enum class ErrorKind {
  DimensionMismatch,
  InvalidValuation,
  NotDifferentiable,
  BoundaryGradient,
  DomainError,
  EmptyInput,
  BadParameter,
  DidNotConverge,
  UnsupportedValuation,
  InconsistentMultipliers,
  NotLeontief,
  TooLarge,
  NotEquilibrium,
  BadBid,
  QuadratureFailure,
  BadMultiplicity,
  UnsupportedDegree,
  BadRho,
  MixedDegrees,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is
/// stable and is what callers (and the CLI exit-code mapping) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace cesmarket
