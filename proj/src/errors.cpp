#include "cesmarket/errors.hpp"

namespace cesmarket {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidValuation: return "InvalidValuation";
    case ErrorKind::NotDifferentiable: return "NotDifferentiable";
    case ErrorKind::BoundaryGradient: return "BoundaryGradient";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::BadParameter: return "BadParameter";
    case ErrorKind::DidNotConverge: return "DidNotConverge";
    case ErrorKind::UnsupportedValuation: return "UnsupportedValuation";
    case ErrorKind::InconsistentMultipliers: return "InconsistentMultipliers";
    case ErrorKind::NotLeontief: return "NotLeontief";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::NotEquilibrium: return "NotEquilibrium";
    case ErrorKind::BadBid: return "BadBid";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::BadMultiplicity: return "BadMultiplicity";
    case ErrorKind::UnsupportedDegree: return "UnsupportedDegree";
    case ErrorKind::BadRho: return "BadRho";
    case ErrorKind::MixedDegrees: return "MixedDegrees";
  }
  return "Unknown";
}

}  // namespace cesmarket
