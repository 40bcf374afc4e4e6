// Deterministic density-matrix evolutions, analytic decay laws, and ensemble
// density estimators used to cross-check the stochastic solvers.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "collapsim/dynamics.hpp"
#include "collapsim/grid.hpp"
#include "collapsim/hilbert.hpp"
#include "collapsim/kernels.hpp"

namespace collapsim {

struct DensityPath {
    std::vector<double> times;
    std::vector<CMatrix> rho;
};

/// d rho/dt = -i[H0, rho] - (gamma/2) sum_i [A_i, [A_i, rho]], classical RK4 on
/// the grid. A step whose trace drift exceeds 1e-8 is retried with finer
/// substeps; StepRejected if that does not help.
DensityPath evolve_lindblad_csl(const CMatrix* hamiltonian, const CommutingSet& set, const CMatrix& rho0,
                                const TimeGrid& grid, double gamma, const Checkpoints& checkpoints);

/// d rho/dt = -gamma G(t; t0) sum_i [A_i, [A_i, rho]] with the analytic G of the
/// kernel (independent identical processes, no H0).
DensityPath evolve_colored_master(const CommutingSet& set, const CMatrix& rho0, const TimeGrid& grid,
                                  const CorrelationKernel& kernel, const Checkpoints& checkpoints);

/// <alpha|rho(t)|beta> / <alpha|rho(t0)|beta> = exp(-(gamma/2) sum_i (a_ia - a_ib)^2 f(t; t0)).
double offdiag_analytic(const CommutingSet& set, const CorrelationKernel& kernel, std::size_t alpha,
                        std::size_t beta, double t, double t0);

struct ObservableReport {
    std::vector<double> times;
    std::vector<double> mean;
    /// Central finite difference of mean (interior checkpoints only; NaN at the ends).
    std::vector<double> derivative;
    /// -gamma G(t) sum_i Tr(rho [A_i, [A_i, O]]).
    std::vector<double> rhs;
    /// max |derivative - rhs| over interior checkpoints.
    double max_residual = 0.0;
};

ObservableReport observable_mean(const CMatrix& observable, const CommutingSet& set,
                                 const CorrelationKernel& kernel, double t0, const DensityPath& path);

enum class EstimatorMode {
    /// (1/n) sum_k r_k |psi_raw><psi_raw|, r_k the proposal ratio.
    Raw,
    /// Self-normalized: sum_k w_k |psi_phys><psi_phys| / sum_k w_k.
    Cooked,
};

struct EnsembleDensity {
    std::vector<double> times;
    std::vector<CMatrix> mean;
    std::vector<Eigen::MatrixXd> stderr_re;
    std::vector<Eigen::MatrixXd> stderr_im;
    std::size_t batches = 0;
};

/// Density estimate at every checkpoint with batch-means standard errors
/// (contiguous batches in trajectory order). Throws DegenerateEnsemble when all
/// weights vanish.
EnsembleDensity ensemble_to_density(std::span<const TrajectoryRecord> records, EstimatorMode mode,
                                    std::size_t batches = 100);

struct DecayReport {
    std::size_t alpha = 0;
    std::size_t beta = 0;
    std::vector<double> times;
    std::vector<double> analytic;
    std::vector<double> ensemble;
    std::vector<double> stderr_;
};

/// |<alpha|rho|beta>| of an ensemble estimate against offdiag_analytic * |rho0_ab|.
DecayReport decay_report(const EnsembleDensity& estimate, const CommutingSet& set, const CorrelationKernel& kernel,
                         const CMatrix& rho0, std::size_t alpha, std::size_t beta, double t0);

/// CSV (t, i, j, re, im, stderr_re, stderr_im); deterministic paths get zero errors.
void write_density_csv(const std::filesystem::path& path, const EnsembleDensity& estimate);
void write_density_csv(const std::filesystem::path& path, const DensityPath& path_values);

} // namespace collapsim
