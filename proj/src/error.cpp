#include "flatpi/error.hpp"

namespace flatpi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EpsilonTooLarge: return "EpsilonTooLarge";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::EmptyUnion: return "EmptyUnion";
    case ErrorCode::OriginExcluded: return "OriginExcluded";
    case ErrorCode::OriginOnBoundary: return "OriginOnBoundary";
    case ErrorCode::BigMTooSmall: return "BigMTooSmall";
    case ErrorCode::NodeBudget: return "NodeBudget";
    case ErrorCode::NotControllable: return "NotControllable";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::SingularPencil: return "SingularPencil";
    case ErrorCode::InfeasibleFilter: return "InfeasibleFilter";
    case ErrorCode::InfeasibleMPC: return "InfeasibleMPC";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace flatpi
