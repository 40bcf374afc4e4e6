// Rigid macroscopic bodies under the factorized space-time kernel:
// center-of-mass coherence damping and its growth with the constituent number.
//
// Units are cm and s throughout.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "collapsim/grid.hpp"

namespace collapsim {

inline constexpr double kSpeedOfLight = 2.99792458e10; // cm/s

struct MacroParams {
    /// Localization parameter, cm^-2 (1/sqrt(alpha) = 1e-5 cm).
    double alpha = 1e10;
    /// Rate per constituent, s^-1.
    double lambda = 1e-16;
    /// Temporal width parameter, s^-2; zero selects c^2 alpha.
    double beta = 0.0;
    /// Start of the dynamics, s.
    double t0 = 0.0;

    /// lambda (4 pi / alpha)^{3/2}
    double gamma() const;
    double effective_beta() const;
    void validate() const;
};

struct MacroBody {
    /// Equilibrium offsets of the constituents from the center of mass, cm.
    std::vector<Eigen::Vector3d> offsets;

    std::size_t size() const noexcept { return offsets.size(); }
    void validate() const;

    /// CSV (i, qx, qy, qz).
    static MacroBody from_csv(const std::filesystem::path& path);
    /// count sites of a simple cubic lattice with the given spacing, filled in
    /// x-fastest order.
    static MacroBody cubic_lattice(std::size_t count, double spacing);
};

/// g(r) = gamma (alpha / 4 pi)^{3/2} exp(-alpha r^2 / 4)
/// h(u) = (beta / 4 pi)^{1/2} exp(-beta u^2 / 4)
struct FactorizedKernel {
    MacroParams params;

    double space(const Eigen::Vector3d& r) const;
    double time(double u) const;
};

FactorizedKernel kernel_factorized(const MacroParams& params);

/// gamma(t) = gamma erf(sqrt(beta) (t - t0) / 2); InvalidInterval for t < t0.
double gamma_of_t(const MacroParams& params, double t);

/// F(Q - x) = (alpha / 2 pi)^{3/2} sum_i exp(-(alpha / 2) |Q + q_i - x|^2)
double smeared_density(const MacroBody& body, const Eigen::Vector3d& q, const Eigen::Vector3d& x,
                       const MacroParams& params);

/// (alpha / 4 pi)^{3/2} sum_ij [exp(-(alpha/4) |q_i - q_j|^2) - exp(-(alpha/4) |dQ + q_i - q_j|^2)]
double damping_spatial_factor(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                              const MacroParams& params);

/// Gamma(Q', Q'', t) = gamma(t) * damping_spatial_factor.
double macro_damping_rate(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2, double t,
                          const MacroParams& params);

/// gamma(t) int (F'^2 / 2 + F''^2 / 2 - F' F'') d^3x by a tensor trapezoid rule
/// with spacing `spacing_factor / sqrt(alpha)` over a box padded by
/// `padding / sqrt(alpha)` around all constituent centres.
double macro_damping_rate_quadrature(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                                     double t, const MacroParams& params, double spacing_factor = 0.4,
                                     double padding = 8.0);

/// int_{t0}^{t} gamma(u) du in closed form.
double integrated_gamma(const MacroParams& params, double t);

/// <Q'|rho(t)|Q''> / <Q'|rho(t0)|Q''> = exp(-int_{t0}^{t} Gamma du) at every grid node,
/// with the time integral done by composite Gauss-Legendre quadrature.
std::vector<double> com_offdiag_decay(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                                      const TimeGrid& grid, const MacroParams& params);

/// Large-separation, long-time rate for N well-separated constituents: lambda N.
double saturated_rate(const MacroParams& params, double constituents);

/// gamma (alpha / 4 pi)^{3/2}, which equals lambda.
double unit_bridge(const MacroParams& params);

struct RateRow {
    double separation = 0.0;
    double t = 0.0;
    double gamma_rate = 0.0;
    double decay_factor = 1.0;
};

/// Rates along the x axis, Q' = 0 and Q'' = (d, 0, 0) for each separation d.
std::vector<RateRow> rate_table(const MacroBody& body, std::span<const double> separations, const TimeGrid& grid,
                                const MacroParams& params);

/// Rate table CSV (|dQ|, t, Gamma, decay_factor).
void write_rate_csv(const std::filesystem::path& path, std::span<const RateRow> rows);

} // namespace collapsim
