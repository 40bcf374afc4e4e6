#include "collapsim/error.hpp"

namespace collapsim {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Validation: return "Validation";
    case ErrorCode::UnsupportedPointwiseEval: return "UnsupportedPointwiseEval";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::KernelNotPSD: return "KernelNotPSD";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::EmptyEigenmanifold: return "EmptyEigenmanifold";
    case ErrorCode::NonCommuting: return "NonCommuting";
    case ErrorCode::StepRejected: return "StepRejected";
    case ErrorCode::DegenerateEnsemble: return "DegenerateEnsemble";
    case ErrorCode::TooManyUndecided: return "TooManyUndecided";
    case ErrorCode::UnknownFunctional: return "UnknownFunctional";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

bool is_numerical_failure(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::KernelNotPSD:
    case ErrorCode::ZeroNorm:
    case ErrorCode::StepRejected:
    case ErrorCode::DegenerateEnsemble:
    case ErrorCode::TooManyUndecided:
        return true;
    default:
        return false;
    }
}

} // namespace collapsim
