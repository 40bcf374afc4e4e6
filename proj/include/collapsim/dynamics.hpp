// Trajectory solvers for the linear collapse equations in the closed cases:
//
//  * white noise with arbitrary H0 (Strang splitting, exact diagonal noise factor),
//  * colored noise with commuting (or absent) H0 (exact per-amplitude solution),
//  * the raw linear equation without the norm-compensating term.
//
// Raw vectors are carried in log-offset form; every record stores the
// normalized (physical) state together with log ||psi_raw||^2.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "collapsim/grid.hpp"
#include "collapsim/hilbert.hpp"
#include "collapsim/kernels.hpp"
#include "collapsim/noise.hpp"

namespace collapsim {

struct QuantumSystem {
    CommutingSet operators;
    /// H0 in the shared eigenbasis; absent means H0 = 0.
    std::optional<CMatrix> hamiltonian;
    /// Initial amplitudes, normalized by validate().
    CVector psi0;

    std::size_t dimension() const noexcept { return operators.dimension(); }
    /// Checks shapes and Hermiticity and normalizes psi0.
    void validate();
};

struct TrajectoryRecord {
    std::uint64_t master_seed = 0;
    std::uint64_t index = 0;
    std::vector<double> times;
    /// Physical (normalized) state at each checkpoint.
    std::vector<CVector> states;
    /// log ||psi_raw(t)||^2 at each checkpoint.
    std::vector<double> log_weights;
    /// x_i(t) at each checkpoint.
    std::vector<Eigen::VectorXd> x;
    /// log(dP_raw/dQ) of the noise proposal.
    double log_proposal_ratio = 0.0;

    std::size_t num_checkpoints() const noexcept { return times.size(); }
};

TrajectoryRecord evolve_csl_white(const QuantumSystem& system, const TimeGrid& grid, double gamma,
                                  const NoiseRealization& noise, const Checkpoints& checkpoints);

/// Throws NonCommuting when H0 is present and max ||[A_i, H0]|| > 1e-10.
TrajectoryRecord evolve_colored_commuting(const QuantumSystem& system, const TimeGrid& grid,
                                          const CorrelationKernel& kernel, const NoiseRealization& noise,
                                          const Checkpoints& checkpoints);

/// Strang splitting of d psi/dt = [-i H0 + sum_i A_i w_i - compensator * sum_i A_i^2] psi.
/// With compensator = 0 this is the raw linear equation; with compensator = gamma and
/// white noise it is identical to evolve_csl_white.
TrajectoryRecord evolve_raw_linear(const QuantumSystem& system, const TimeGrid& grid, const NoiseRealization& noise,
                                   const Checkpoints& checkpoints, double compensator = 0.0);

// =============================================================================
// Functional-derivative probe
// =============================================================================

enum class ProbeSolver { CslWhite, ColoredCommuting };

struct ProbeSetup {
    QuantumSystem system;
    TimeGrid grid;
    CorrelationKernel kernel;
    NoiseRealization noise;
    ProbeSolver solver;
};

struct ProbeResult {
    /// (psi_bumped(t1) - psi(t1)) / eps, raw vectors.
    CVector estimate;
    /// A_j psi(t1), halved when s = t1; zero when s lies outside [t0, t1].
    CVector expected;
    double relative_error = 0.0;
    bool endpoint = false;
};

/// Raw final state psi(t1) for the given noise.
CVector probe_final_state(const ProbeSetup& setup, const NoiseRealization& noise);

/// Adds a hat bump of area eps centred on the grid node s to w_j and re-runs
/// the trajectory.
ProbeResult functional_derivative_probe(const ProbeSetup& setup, double s, std::size_t j, double eps);

/// First-order Richardson extrapolation of the probe from eps_coarse and eps_fine.
ProbeResult richardson_probe(const ProbeSetup& setup, double s, std::size_t j, double eps_coarse, double eps_fine);

// =============================================================================
// Ensembles
// =============================================================================

enum class SolverChoice {
    /// CSL splitting for white kernels, exact commuting solution otherwise.
    Auto,
    /// Uncompensated raw linear equation.
    RawLinear,
};

enum class Proposal {
    Raw,
    /// Equal-weight mixture of tilts towards each joint eigenmanifold at t1.
    Tilted,
};

struct EnsembleSpec {
    QuantumSystem system;
    TimeGrid grid;
    CorrelationKernel kernel;
    std::size_t trajectories = 1;
    std::uint64_t master_seed = 0;
    unsigned workers = 1;
    Checkpoints checkpoints;
    Proposal proposal = Proposal::Raw;
    SolverChoice solver = SolverChoice::Auto;
};

/// Builds the noise source matching the spec's kernel (one process per operator).
NoiseSource make_noise_source(const EnsembleSpec& spec);

/// Noise realization `index` of the ensemble (raw or tilted per the spec).
NoiseRealization draw_noise(const EnsembleSpec& spec, const NoiseSource& source, std::uint64_t index);

/// Runs trajectories 0..n-1; the result is independent of the worker count.
std::vector<TrajectoryRecord> run_ensemble(const EnsembleSpec& spec);

/// Single trajectory with the spec's solver from a given noise realization.
TrajectoryRecord run_trajectory(const EnsembleSpec& spec, const NoiseRealization& noise);

/// CSV (trajectory, t, weight, |c_1|^2..|c_d|^2, dominant_outcome).
void write_trajectory_dump(const std::filesystem::path& path, const CommutingSet& set,
                           std::span<const TrajectoryRecord> records);

} // namespace collapsim
