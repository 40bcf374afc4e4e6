// Error types shared by every collapsim module.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace collapsim {

enum class ErrorCode {
    Validation,
    UnsupportedPointwiseEval,
    OutOfRange,
    InvalidInterval,
    KernelNotPSD,
    ZeroNorm,
    EmptyEigenmanifold,
    NonCommuting,
    StepRejected,
    DegenerateEnsemble,
    TooManyUndecided,
    UnknownFunctional,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Numerical failures map to CLI exit status 3, everything else to 2.
bool is_numerical_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace collapsim
