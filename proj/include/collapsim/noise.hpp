// Reproducible Gaussian noise paths on a time grid.
//
// Colored paths are sampled at grid nodes as w = L z with C = L L^T the
// covariance gamma * D(t_k, t_l), and integrated with the trapezoid rule.
// White noise is a sequence of independent per-step values w_k ~ N(0, gamma/dt)
// (node k carries the value for the step [t_k, t_k + dt]) integrated by
// left-endpoint accumulation, x(t_k) = sum_{j<k} w_j dt.
//
// Every realization is a pure function of (master_seed, trajectory_index): the
// normals for process i are drawn from the child stream in process-major order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "collapsim/grid.hpp"
#include "collapsim/kernels.hpp"

namespace collapsim {

enum class NoiseKind { Colored, White };

struct NoiseRealization {
    std::uint64_t master_seed = 0;
    std::uint64_t index = 0;
    NoiseKind kind = NoiseKind::Colored;
    double dt = 0.0;
    /// [processes x nodes]
    Eigen::MatrixXd w;
    /// Integrated path, x(t0) = 0.
    Eigen::MatrixXd x;
    /// log(dP_raw / dQ) when drawn from a tilted proposal Q, otherwise 0.
    double log_proposal_ratio = 0.0;

    std::size_t num_processes() const noexcept { return static_cast<std::size_t>(w.rows()); }
    std::size_t num_nodes() const noexcept { return static_cast<std::size_t>(w.cols()); }

    /// Increment of x over step [t_k, t_{k+1}] for process i, computed from w
    /// with the same rule that produced x (trapezoid or left endpoint).
    double step_increment(std::size_t i, std::size_t k) const noexcept {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto kk = static_cast<Eigen::Index>(k);
        return kind == NoiseKind::White ? w(ii, kk) * dt : 0.5 * dt * (w(ii, kk) + w(ii, kk + 1));
    }

    /// Recomputes x from w.
    void integrate();
};

/// x_k = sum over the trapezoid panels of w up to node k.
Eigen::VectorXd integrate_trapezoid(const Eigen::VectorXd& w, double dt);
/// x_k = sum_{j<k} w_j dt.
Eigen::VectorXd integrate_left(const Eigen::VectorXd& w, double dt);

/// C[k, l] = gamma * D(t_k, t_l). Not defined for white kernels.
Eigen::MatrixXd build_covariance(const TimeGrid& grid, const CorrelationKernel& kernel);

/// Smallest eigenvalue of a symmetric matrix divided by its largest diagonal entry.
double psd_floor_ratio(const Eigen::MatrixXd& covariance);

struct CovarianceFactor {
    /// Covariance actually sampled (input plus diagonal jitter).
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd lower;
    /// Absolute diagonal jitter that was added.
    double jitter = 0.0;
};

/// Cholesky factorization with diagonal jitter 1e-12 * max(diag), escalated by
/// 10x per failure up to 1e-8 * max(diag); throws KernelNotPSD beyond that.
CovarianceFactor factorize_covariance(const Eigen::MatrixXd& covariance);

/// Eigenvalue vectors (a_{1c}, ..., a_{mc}) defining an equal-weight mixture of
/// exponentially tilted proposals; see NoiseSource::draw_tilted.
using TiltComponents = std::vector<std::vector<double>>;

class NoiseSource {
public:
    static NoiseSource colored(const TimeGrid& grid, const CorrelationKernel& kernel, std::size_t processes = 1);
    static NoiseSource colored(const TimeGrid& grid, std::shared_ptr<const CovarianceFactor> factor,
                               std::size_t processes = 1);
    static NoiseSource white(const TimeGrid& grid, double gamma, std::size_t processes = 1);

    NoiseKind kind() const noexcept { return kind_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t processes() const noexcept { return processes_; }
    const CovarianceFactor* factor() const noexcept { return factor_.get(); }

    /// One raw realization keyed by (master_seed, index).
    NoiseRealization draw(std::uint64_t master_seed, std::uint64_t index) const;

    /// One realization from Q = (1/K) sum_c Q_c, where Q_c is P_raw reweighted by
    /// exp(sum_i 2 a_{ic} x_i(t1) - 2 a_{ic}^2 V), V = Var[x(t1)]. Under Q_c the
    /// paths are Gaussian with mean 2 a_{ic} Cov(w(t_k), x(t1)). The component is
    /// chosen from the Proposal child stream; the returned log_proposal_ratio is
    /// log(dP_raw/dQ) evaluated on the drawn path.
    NoiseRealization draw_tilted(std::uint64_t master_seed, std::uint64_t index,
                                 const TiltComponents& components) const;

    /// Var[x(t1)] of the discrete sampler.
    double final_variance() const noexcept { return final_variance_; }
    /// Cov(w(t_k), x(t1)) for k = 0..M.
    const Eigen::VectorXd& final_cross_covariance() const noexcept { return cross_; }

private:
    NoiseSource(const TimeGrid& grid, NoiseKind kind, std::size_t processes);

    void fill(NoiseRealization& out, std::uint64_t master_seed, std::uint64_t index) const;

    TimeGrid grid_;
    NoiseKind kind_;
    std::size_t processes_;
    double gamma_ = 0.0;
    std::shared_ptr<const CovarianceFactor> factor_;
    Eigen::VectorXd cross_;
    double final_variance_ = 0.0;
};

/// n colored realizations with indices 0..n-1.
std::vector<NoiseRealization> sample_paths(const NoiseSource& source, std::size_t n, std::uint64_t master_seed,
                                           unsigned workers = 1);

/// n white realizations with indices 0..n-1.
std::vector<NoiseRealization> sample_white_increments(const TimeGrid& grid, double gamma, std::size_t n,
                                                      std::uint64_t master_seed, std::size_t processes = 1,
                                                      unsigned workers = 1);

/// CSV (trajectory, k, t_k, w_1..w_m, x_1..x_m).
void write_path_dump(const std::filesystem::path& path, const TimeGrid& grid,
                     std::span<const NoiseRealization> realizations);

} // namespace collapsim
