// Monte Carlo check of the Gaussian integration-by-parts identity
//
//   <<F[w] w(t)>> = gamma int_{t0}^{t} D(t, s) <<dF/dw(s)>> ds
//
// for a small menu of functionals of x(t) = int_{t0}^{t} w.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "collapsim/kernels.hpp"

namespace collapsim {

enum class Functional { Constant, LinearX, ExpX };

std::string_view to_string(Functional functional) noexcept;
/// "constant" | "linear-x" | "exp-x"; throws UnknownFunctional otherwise.
Functional parse_functional(std::string_view name);

struct FnReport {
    KernelFamily kernel = KernelFamily::White;
    Functional functional = Functional::Constant;
    double lhs = 0.0;
    double lhs_stderr = 0.0;
    double rhs = 0.0;
    /// |lhs - rhs| / lhs_stderr (the right-hand side is deterministic).
    double sigmas = 0.0;
    std::size_t samples = 0;
};

/// gamma * G(t; t0) * <<dF/dw>>, using the closed-form G and <<exp x>> = exp(gamma f / 2).
double fn_rhs(const CorrelationKernel& kernel, Functional functional, double t, double t0);

/// Composite Simpson estimate of int_{t0}^{t} D(t, s) ds with `panels` panels
/// (an even count). Not available for White kernels.
double kernel_integral_quadrature(const CorrelationKernel& kernel, double t, double t0, std::size_t panels);

/// Samples n single-process paths on a `steps`-step grid over [t0, t]. White
/// paths use iid node values of variance gamma/dt with the trapezoid x, so that
/// the endpoint value carries half of the unit kernel mass.
FnReport fn_validate(const CorrelationKernel& kernel, Functional functional, double t, double t0, std::size_t n,
                     std::uint64_t master_seed, std::size_t steps = 200, unsigned workers = 1);

/// Report CSV (kernel, functional, lhs, rhs, stderr, sigmas).
void write_fn_report(const std::filesystem::path& path, std::span<const FnReport> reports);

} // namespace collapsim
