#include "collapsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/parallel.hpp"

namespace collapsim {

namespace {

void check_noise_shape(const QuantumSystem& system, const TimeGrid& grid, const NoiseRealization& noise) {
    if (noise.num_processes() != system.operators.num_ops()) {
        throw Error(ErrorCode::Validation, "noise process count must equal the number of operators");
    }
    if (noise.num_nodes() != grid.num_nodes() || noise.x.cols() != noise.w.cols()) {
        throw Error(ErrorCode::Validation, "noise realization does not match the time grid");
    }
}

void check_checkpoints(const TimeGrid& grid, const Checkpoints& checkpoints) {
    if (checkpoints.empty()) {
        throw Error(ErrorCode::Validation, "at least one checkpoint is required");
    }
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (checkpoints[i] > grid.steps() || (i > 0 && checkpoints[i] <= checkpoints[i - 1])) {
            throw Error(ErrorCode::Validation, "checkpoints must be increasing grid node indices");
        }
    }
}

/// V diag(exp(-i E t)) V^dagger for Hermitian H.
CMatrix unitary(const Eigen::SelfAdjointEigenSolver<CMatrix>& eig, double t) {
    const Eigen::VectorXd& energies = eig.eigenvalues();
    CVector phases(energies.size());
    for (Eigen::Index a = 0; a < energies.size(); ++a) {
        phases(a) = std::polar(1.0, -energies(a) * t);
    }
    return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

void record_state(TrajectoryRecord& rec, const StateVector& psi, double t, const NoiseRealization& noise,
                  std::size_t node) {
    const NormalizedState n = normalize(psi);
    rec.times.push_back(t);
    rec.states.push_back(n.state.amplitudes());
    rec.log_weights.push_back(n.log_weight);
    rec.x.push_back(noise.x.col(static_cast<Eigen::Index>(node)));
}

TrajectoryRecord start_record(const NoiseRealization& noise, std::size_t checkpoints) {
    TrajectoryRecord rec;
    rec.master_seed = noise.master_seed;
    rec.index = noise.index;
    rec.log_proposal_ratio = noise.log_proposal_ratio;
    rec.times.reserve(checkpoints);
    rec.states.reserve(checkpoints);
    rec.log_weights.reserve(checkpoints);
    rec.x.reserve(checkpoints);
    return rec;
}

/// Multiplies amplitude alpha by exp(exponent(alpha)), shifting the peak into the offset.
void apply_diagonal_exponent(StateVector& psi, const Eigen::VectorXd& exponent) {
    const double peak = exponent.maxCoeff();
    CVector& amps = psi.amplitudes();
    for (Eigen::Index a = 0; a < amps.size(); ++a) {
        amps(a) *= std::exp(exponent(a) - peak);
    }
    psi.add_log_scale(peak);
}

TrajectoryRecord split_step_evolve(const QuantumSystem& system, const TimeGrid& grid, const NoiseRealization& noise,
                                   const Checkpoints& checkpoints, double compensator) {
    check_noise_shape(system, grid, noise);
    check_checkpoints(grid, checkpoints);
    const CommutingSet& ops = system.operators;
    const auto d = static_cast<Eigen::Index>(ops.dimension());
    const double dt = grid.dt();

    std::optional<CMatrix> half_step;
    if (system.hamiltonian) {
        Eigen::SelfAdjointEigenSolver<CMatrix> eig(*system.hamiltonian);
        half_step = unitary(eig, 0.5 * dt);
    }
    Eigen::VectorXd squares = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < ops.num_ops(); ++i) {
        squares += ops.table().row(static_cast<Eigen::Index>(i)).transpose().cwiseAbs2();
    }

    TrajectoryRecord rec = start_record(noise, checkpoints.size());
    StateVector psi(system.psi0, 0.0);
    std::size_t next = 0;
    if (checkpoints[next] == 0) {
        record_state(rec, psi, grid.node(0), noise, 0);
        ++next;
    }
    Eigen::VectorXd exponent(d);
    const std::size_t last = checkpoints.back();
    for (std::size_t k = 0; k < last; ++k) {
        if (half_step) {
            psi.amplitudes() = *half_step * psi.amplitudes();
        }
        exponent = -compensator * dt * squares;
        for (std::size_t i = 0; i < ops.num_ops(); ++i) {
            const double inc = noise.step_increment(i, k);
            exponent += inc * ops.table().row(static_cast<Eigen::Index>(i)).transpose();
        }
        apply_diagonal_exponent(psi, exponent);
        if (half_step) {
            psi.amplitudes() = *half_step * psi.amplitudes();
        }
        psi.rebalance();
        if (checkpoints[next] == k + 1) {
            record_state(rec, psi, grid.node(k + 1), noise, k + 1);
            ++next;
        }
    }
    return rec;
}

} // namespace

void QuantumSystem::validate() {
    const std::size_t d = operators.dimension();
    if (d == 0) {
        throw Error(ErrorCode::Validation, "system needs an eigenvalue table");
    }
    if (static_cast<std::size_t>(psi0.size()) != d) {
        throw Error(ErrorCode::Validation, "initial state dimension does not match the eigenvalue table");
    }
    if (hamiltonian) {
        validate_hamiltonian(*hamiltonian, d);
    }
    const double norm = psi0.norm();
    if (!std::isfinite(norm) || !(norm > 0.0)) {
        throw Error(ErrorCode::ZeroNorm, "initial state has zero norm");
    }
    psi0 /= norm;
}

TrajectoryRecord evolve_csl_white(const QuantumSystem& system, const TimeGrid& grid, double gamma,
                                  const NoiseRealization& noise, const Checkpoints& checkpoints) {
    if (noise.kind != NoiseKind::White) {
        throw Error(ErrorCode::Validation, "CSL solver requires white noise");
    }
    return split_step_evolve(system, grid, noise, checkpoints, gamma);
}

TrajectoryRecord evolve_raw_linear(const QuantumSystem& system, const TimeGrid& grid, const NoiseRealization& noise,
                                   const Checkpoints& checkpoints, double compensator) {
    return split_step_evolve(system, grid, noise, checkpoints, compensator);
}

TrajectoryRecord evolve_colored_commuting(const QuantumSystem& system, const TimeGrid& grid,
                                          const CorrelationKernel& kernel, const NoiseRealization& noise,
                                          const Checkpoints& checkpoints) {
    check_noise_shape(system, grid, noise);
    check_checkpoints(grid, checkpoints);
    if (kernel.is_white() != (noise.kind == NoiseKind::White)) {
        throw Error(ErrorCode::Validation, "noise realization kind does not match the kernel");
    }
    const CommutingSet& ops = system.operators;
    std::optional<Eigen::SelfAdjointEigenSolver<CMatrix>> eig;
    if (system.hamiltonian) {
        const double comm = commutation_check(*system.hamiltonian, ops);
        if (comm > 1e-10) {
            throw Error(ErrorCode::NonCommuting, "H0 does not commute with the operators (" + std::to_string(comm) + ")");
        }
        eig.emplace(*system.hamiltonian);
    }
    const auto d = static_cast<Eigen::Index>(ops.dimension());
    Eigen::VectorXd squares = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < ops.num_ops(); ++i) {
        squares += ops.table().row(static_cast<Eigen::Index>(i)).transpose().cwiseAbs2();
    }

    TrajectoryRecord rec = start_record(noise, checkpoints.size());
    Eigen::VectorXd exponent(d);
    for (std::size_t node : checkpoints) {
        const double t = grid.node(node);
        const double f = kernel.double_integral(t, grid.t0());
        exponent = -kernel.gamma() * f * squares;
        for (std::size_t i = 0; i < ops.num_ops(); ++i) {
            exponent += noise.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(node)) *
                        ops.table().row(static_cast<Eigen::Index>(i)).transpose();
        }
        StateVector psi(system.psi0, 0.0);
        apply_diagonal_exponent(psi, exponent);
        if (eig) {
            psi.amplitudes() = unitary(*eig, t - grid.t0()) * psi.amplitudes();
        }
        psi.rebalance();
        record_state(rec, psi, t, noise, node);
    }
    return rec;
}

// =============================================================================
// Functional-derivative probe
// =============================================================================

CVector probe_final_state(const ProbeSetup& setup, const NoiseRealization& noise) {
    const Checkpoints last = {setup.grid.steps()};
    TrajectoryRecord rec;
    if (setup.solver == ProbeSolver::CslWhite) {
        rec = evolve_csl_white(setup.system, setup.grid, setup.kernel.gamma(), noise, last);
    } else {
        rec = evolve_colored_commuting(setup.system, setup.grid, setup.kernel, noise, last);
    }
    return rec.states.back() * std::exp(0.5 * rec.log_weights.back());
}

namespace {

NoiseRealization bumped(const NoiseRealization& base, std::size_t node, std::size_t j, double eps) {
    NoiseRealization out = base;
    const auto jj = static_cast<Eigen::Index>(j);
    const auto kk = static_cast<Eigen::Index>(node);
    const double dt = base.dt;
    if (base.kind == NoiseKind::White) {
        // Piecewise-constant steps: half the hat falls on each neighbouring step.
        if (kk >= 1) out.w(jj, kk - 1) += 0.5 * eps / dt;
        out.w(jj, kk) += 0.5 * eps / dt;
    } else {
        // Node values with trapezoid integration: a hat of height eps/dt.
        out.w(jj, kk) += eps / dt;
    }
    out.integrate();
    return out;
}

} // namespace

ProbeResult functional_derivative_probe(const ProbeSetup& setup, double s, std::size_t j, double eps) {
    if (j >= setup.system.operators.num_ops()) {
        throw Error(ErrorCode::Validation, "probe process index out of range");
    }
    if (!(eps != 0.0) || !std::isfinite(eps)) {
        throw Error(ErrorCode::Validation, "probe bump area must be nonzero");
    }
    const CVector base = probe_final_state(setup, setup.noise);
    ProbeResult out;
    const double slack = 1e-9 * setup.grid.dt();
    if (s > setup.grid.t1() + slack || s < setup.grid.t0() - slack) {
        out.estimate = CVector::Zero(base.size());
        out.expected = CVector::Zero(base.size());
        out.relative_error = 0.0;
        return out;
    }
    const std::size_t node = setup.grid.nearest_node(s);
    const CVector pert = probe_final_state(setup, bumped(setup.noise, node, j, eps));
    out.estimate = (pert - base) / eps;
    out.endpoint = node == setup.grid.steps();
    const double factor = out.endpoint ? 0.5 : 1.0;
    out.expected = factor * (setup.system.operators.matrix(j) * base);
    const double scale = out.expected.norm();
    const double diff = (out.estimate - out.expected).norm();
    out.relative_error = scale > 0.0 ? diff / scale : diff;
    return out;
}

ProbeResult richardson_probe(const ProbeSetup& setup, double s, std::size_t j, double eps_coarse, double eps_fine) {
    const ProbeResult coarse = functional_derivative_probe(setup, s, j, eps_coarse);
    ProbeResult fine = functional_derivative_probe(setup, s, j, eps_fine);
    fine.estimate = (eps_coarse * fine.estimate - eps_fine * coarse.estimate) / (eps_coarse - eps_fine);
    const double scale = fine.expected.norm();
    const double diff = (fine.estimate - fine.expected).norm();
    fine.relative_error = scale > 0.0 ? diff / scale : diff;
    return fine;
}

// =============================================================================
// Ensembles
// =============================================================================

NoiseSource make_noise_source(const EnsembleSpec& spec) {
    const std::size_t m = spec.system.operators.num_ops();
    if (spec.kernel.is_white()) {
        return NoiseSource::white(spec.grid, spec.kernel.gamma(), m);
    }
    return NoiseSource::colored(spec.grid, spec.kernel, m);
}

NoiseRealization draw_noise(const EnsembleSpec& spec, const NoiseSource& source, std::uint64_t index) {
    if (spec.proposal == Proposal::Raw) {
        return source.draw(spec.master_seed, index);
    }
    TiltComponents tilts;
    for (const auto& g : spec.system.operators.groups()) {
        tilts.push_back(g.eigenvalues);
    }
    return source.draw_tilted(spec.master_seed, index, tilts);
}

TrajectoryRecord run_trajectory(const EnsembleSpec& spec, const NoiseRealization& noise) {
    if (spec.solver == SolverChoice::RawLinear) {
        return evolve_raw_linear(spec.system, spec.grid, noise, spec.checkpoints, 0.0);
    }
    if (spec.kernel.is_white()) {
        return evolve_csl_white(spec.system, spec.grid, spec.kernel.gamma(), noise, spec.checkpoints);
    }
    return evolve_colored_commuting(spec.system, spec.grid, spec.kernel, noise, spec.checkpoints);
}

std::vector<TrajectoryRecord> run_ensemble(const EnsembleSpec& spec) {
    if (spec.trajectories == 0) {
        throw Error(ErrorCode::Validation, "ensemble needs at least one trajectory");
    }
    if (spec.solver == SolverChoice::Auto && !spec.kernel.is_white() && spec.system.hamiltonian &&
        commutation_check(*spec.system.hamiltonian, spec.system.operators) > 1e-10) {
        throw Error(ErrorCode::NonCommuting, "colored noise requires H0 commuting with the operators");
    }
    const NoiseSource source = make_noise_source(spec);
    std::vector<TrajectoryRecord> out(spec.trajectories);
    parallel_for(spec.trajectories, spec.workers,
                 [&](std::size_t i) { out[i] = run_trajectory(spec, draw_noise(spec, source, i)); });
    return out;
}

void write_trajectory_dump(const std::filesystem::path& path, const CommutingSet& set,
                           std::span<const TrajectoryRecord> records) {
    const std::size_t d = set.dimension();
    std::vector<std::string> header = {"trajectory", "t", "weight"};
    for (std::size_t a = 1; a <= d; ++a) {
        header.push_back("p_" + std::to_string(a));
    }
    header.push_back("dominant_outcome");
    csv::Writer out(path, header);
    std::vector<double> group_weight(set.groups().size());
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < rec.num_checkpoints(); ++c) {
            out.field(rec.index).field(rec.times[c]).field(std::exp(rec.log_weights[c]));
            std::fill(group_weight.begin(), group_weight.end(), 0.0);
            for (std::size_t a = 0; a < d; ++a) {
                const double p = std::norm(rec.states[c](static_cast<Eigen::Index>(a)));
                out.field(p);
                group_weight[set.group_of(a)] += p;
            }
            const auto best = std::max_element(group_weight.begin(), group_weight.end()) - group_weight.begin();
            out.field(static_cast<std::size_t>(best));
            out.end_row();
        }
    }
}

} // namespace collapsim
