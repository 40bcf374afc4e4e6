#include "collapsim/master.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/parallel.hpp"

namespace collapsim {

namespace {

constexpr double kTraceDriftLimit = 1e-8;
constexpr int kMaxRefinements = 6;

// Delta_ab = sum_i (a_ia - a_ib)^2, so that sum_i [A_i, [A_i, X]]_ab = Delta_ab X_ab.
Eigen::MatrixXd commutator_weights(const CommutingSet& set) {
    const auto d = static_cast<Eigen::Index>(set.dimension());
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < set.num_ops(); ++i) {
        for (Eigen::Index a = 0; a < d; ++a) {
            for (Eigen::Index b = 0; b < d; ++b) {
                const double diff = set.eigenvalue(i, static_cast<std::size_t>(a)) -
                                    set.eigenvalue(i, static_cast<std::size_t>(b));
                delta(a, b) += diff * diff;
            }
        }
    }
    return delta;
}

void check_rho0(const CMatrix& rho0, const CommutingSet& set) {
    const auto d = static_cast<Eigen::Index>(set.dimension());
    if (rho0.rows() != d || rho0.cols() != d) {
        throw Error(ErrorCode::Validation, "density matrix shape does not match the eigenvalue table");
    }
    const DensityCheck check = check_density(rho0);
    if (!check.ok) {
        throw Error(ErrorCode::Validation, "initial density matrix must be Hermitian, unit-trace and positive");
    }
}

void check_checkpoints(const Checkpoints& checkpoints, const TimeGrid& grid) {
    if (checkpoints.empty()) {
        throw Error(ErrorCode::Validation, "at least one checkpoint is required");
    }
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        if (checkpoints[k] > grid.steps() || (k > 0 && checkpoints[k] <= checkpoints[k - 1])) {
            throw Error(ErrorCode::Validation, "checkpoints must be strictly increasing grid nodes");
        }
    }
}

// Classical RK4 over the grid for d rho/dt = rhs(t, rho). A step is retried with
// 2, 4, ... substeps when the trace drifts by more than kTraceDriftLimit.
template <typename Rhs>
DensityPath integrate_rk4(const CMatrix& rho0, const TimeGrid& grid, const Checkpoints& checkpoints, Rhs&& rhs) {
    check_checkpoints(checkpoints, grid);
    DensityPath out;
    out.times.reserve(checkpoints.size());
    out.rho.reserve(checkpoints.size());

    CMatrix rho = rho0;
    std::size_t next = 0;
    auto record = [&](std::size_t k) {
        while (next < checkpoints.size() && checkpoints[next] == k) {
            out.times.push_back(grid.node(k));
            out.rho.push_back(rho);
            ++next;
        }
    };
    record(0);

    auto rk4 = [&](const CMatrix& y, double t, double h) {
        const CMatrix k1 = rhs(t, y);
        const CMatrix k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
        const CMatrix k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
        const CMatrix k4 = rhs(t + h, y + h * k3);
        return CMatrix(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };

    const std::size_t last = checkpoints.back();
    for (std::size_t k = 0; k < last; ++k) {
        const double ta = grid.node(k);
        const double tb = grid.node(k + 1);
        const Complex trace0 = rho.trace();
        bool accepted = false;
        for (int level = 0; level <= kMaxRefinements && !accepted; ++level) {
            const std::size_t pieces = std::size_t{1} << level;
            const double h = (tb - ta) / static_cast<double>(pieces);
            CMatrix y = rho;
            for (std::size_t p = 0; p < pieces; ++p) {
                y = rk4(y, ta + static_cast<double>(p) * h, h);
            }
            if (y.allFinite() && std::abs(y.trace() - trace0) <= kTraceDriftLimit) {
                rho = std::move(y);
                accepted = true;
            }
        }
        if (!accepted) {
            throw Error(ErrorCode::StepRejected, "trace drift exceeds 1e-8 at t = " + csv::format_double(ta));
        }
        record(k + 1);
    }
    return out;
}

} // namespace

DensityPath evolve_lindblad_csl(const CMatrix* hamiltonian, const CommutingSet& set, const CMatrix& rho0,
                                const TimeGrid& grid, double gamma, const Checkpoints& checkpoints) {
    check_rho0(rho0, set);
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw Error(ErrorCode::Validation, "gamma must be finite and nonnegative");
    }
    if (hamiltonian != nullptr) {
        validate_hamiltonian(*hamiltonian, set.dimension());
    }
    const Eigen::MatrixXd delta = commutator_weights(set);
    const Complex minus_i(0.0, -1.0);
    return integrate_rk4(rho0, grid, checkpoints, [&](double, const CMatrix& y) {
        CMatrix out = (-0.5 * gamma) * delta.cast<Complex>().cwiseProduct(y);
        if (hamiltonian != nullptr) {
            out += minus_i * (*hamiltonian * y - y * *hamiltonian);
        }
        return out;
    });
}

DensityPath evolve_colored_master(const CommutingSet& set, const CMatrix& rho0, const TimeGrid& grid,
                                  const CorrelationKernel& kernel, const Checkpoints& checkpoints) {
    check_rho0(rho0, set);
    const CMatrix delta = commutator_weights(set).cast<Complex>();
    const double gamma = kernel.gamma();
    const double t0 = grid.t0();
    return integrate_rk4(rho0, grid, checkpoints, [&](double t, const CMatrix& y) {
        const double g = kernel.cumulative(std::max(t, t0), t0);
        return CMatrix((-gamma * g) * delta.cwiseProduct(y));
    });
}

double offdiag_analytic(const CommutingSet& set, const CorrelationKernel& kernel, std::size_t alpha,
                        std::size_t beta, double t, double t0) {
    if (alpha >= set.dimension() || beta >= set.dimension()) {
        throw Error(ErrorCode::Validation, "basis label out of range");
    }
    if (alpha == beta) {
        return 1.0;
    }
    double spread = 0.0;
    for (std::size_t i = 0; i < set.num_ops(); ++i) {
        const double diff = set.eigenvalue(i, alpha) - set.eigenvalue(i, beta);
        spread += diff * diff;
    }
    if (spread == 0.0) {
        return 1.0;
    }
    return std::exp(-0.5 * kernel.gamma() * spread * kernel.double_integral(t, t0));
}

ObservableReport observable_mean(const CMatrix& observable, const CommutingSet& set,
                                 const CorrelationKernel& kernel, double t0, const DensityPath& path) {
    const auto d = static_cast<Eigen::Index>(set.dimension());
    if (observable.rows() != d || observable.cols() != d) {
        throw Error(ErrorCode::Validation, "observable shape does not match the eigenvalue table");
    }
    const CMatrix double_comm = commutator_weights(set).cast<Complex>().cwiseProduct(observable);

    ObservableReport out;
    const std::size_t n = path.times.size();
    out.times = path.times;
    out.mean.resize(n);
    out.rhs.resize(n);
    out.derivative.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < n; ++k) {
        out.mean[k] = (observable * path.rho[k]).trace().real();
        const double g = kernel.cumulative(path.times[k], t0);
        out.rhs[k] = -kernel.gamma() * g * (path.rho[k] * double_comm).trace().real();
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
        out.derivative[k] = (out.mean[k + 1] - out.mean[k - 1]) / (out.times[k + 1] - out.times[k - 1]);
        out.max_residual = std::max(out.max_residual, std::abs(out.derivative[k] - out.rhs[k]));
    }
    return out;
}

EnsembleDensity ensemble_to_density(std::span<const TrajectoryRecord> records, EstimatorMode mode,
                                    std::size_t batches) {
    const std::size_t n = records.size();
    if (n < 2) {
        throw Error(ErrorCode::Validation, "at least two trajectories are required");
    }
    if (batches < 2) {
        throw Error(ErrorCode::Validation, "at least two batches are required");
    }
    batches = std::min(batches, n);
    const std::size_t checkpoints = records.front().num_checkpoints();
    const auto d = records.front().states.empty() ? Eigen::Index{0} : records.front().states.front().size();
    for (const auto& r : records) {
        if (r.num_checkpoints() != checkpoints) {
            throw Error(ErrorCode::Validation, "records have different checkpoint schedules");
        }
    }

    EnsembleDensity out;
    out.batches = batches;
    out.times = records.front().times;

    std::vector<double> log_w(n);
    for (std::size_t c = 0; c < checkpoints; ++c) {
        // Weight of each trajectory relative to P_raw: r_k ||psi_raw||^2.
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            log_w[k] = records[k].log_weights[c] + records[k].log_proposal_ratio;
            if (std::isnan(log_w[k])) {
                throw Error(ErrorCode::DegenerateEnsemble, "non-finite trajectory weight");
            }
            peak = std::max(peak, log_w[k]);
        }
        if (!std::isfinite(peak)) {
            throw Error(ErrorCode::DegenerateEnsemble, "all trajectory weights vanish");
        }
        // Raw mode must report absolute values; cooked mode may rescale freely.
        const double shift = mode == EstimatorMode::Raw ? 0.0 : peak;

        std::vector<CMatrix> num(batches, CMatrix::Zero(d, d));
        std::vector<double> den(batches, 0.0);
        std::vector<std::size_t> count(batches, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t b = k * batches / n;
            const double w = std::exp(log_w[k] - shift);
            num[b] += w * projector(records[k].states[c]);
            den[b] += w;
            ++count[b];
        }
        CMatrix total_num = CMatrix::Zero(d, d);
        double total_den = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            total_num += num[b];
            total_den += den[b];
        }
        if (mode == EstimatorMode::Cooked && !(total_den > 0.0)) {
            throw Error(ErrorCode::DegenerateEnsemble, "all trajectory weights underflow");
        }

        CMatrix mean;
        Eigen::MatrixXd var_re = Eigen::MatrixXd::Zero(d, d);
        Eigen::MatrixXd var_im = Eigen::MatrixXd::Zero(d, d);
        const double bb = static_cast<double>(batches);
        if (mode == EstimatorMode::Raw) {
            mean = total_num / static_cast<double>(n);
            for (std::size_t b = 0; b < batches; ++b) {
                const CMatrix dev = num[b] / static_cast<double>(count[b]) - mean;
                var_re += dev.real().cwiseAbs2();
                var_im += dev.imag().cwiseAbs2();
            }
        } else {
            // Ratio estimator; delta-method residuals per batch.
            mean = total_num / total_den;
            const double mean_den = total_den / bb;
            for (std::size_t b = 0; b < batches; ++b) {
                const CMatrix dev = (num[b] - den[b] * mean) / mean_den;
                var_re += dev.real().cwiseAbs2();
                var_im += dev.imag().cwiseAbs2();
            }
        }
        const double scale = 1.0 / (bb * (bb - 1.0));
        out.mean.push_back(mean);
        out.stderr_re.push_back((var_re * scale).cwiseSqrt());
        out.stderr_im.push_back((var_im * scale).cwiseSqrt());
    }
    return out;
}

DecayReport decay_report(const EnsembleDensity& estimate, const CommutingSet& set, const CorrelationKernel& kernel,
                         const CMatrix& rho0, std::size_t alpha, std::size_t beta, double t0) {
    if (alpha >= set.dimension() || beta >= set.dimension()) {
        throw Error(ErrorCode::Validation, "basis label out of range");
    }
    DecayReport out;
    out.alpha = alpha;
    out.beta = beta;
    out.times = estimate.times;
    const auto a = static_cast<Eigen::Index>(alpha);
    const auto b = static_cast<Eigen::Index>(beta);
    const double initial = std::abs(rho0(a, b));
    for (std::size_t c = 0; c < estimate.times.size(); ++c) {
        out.analytic.push_back(initial * offdiag_analytic(set, kernel, alpha, beta, estimate.times[c], t0));
        out.ensemble.push_back(std::abs(estimate.mean[c](a, b)));
        out.stderr_.push_back(std::hypot(estimate.stderr_re[c](a, b), estimate.stderr_im[c](a, b)));
    }
    return out;
}

namespace {

const std::vector<std::string> kDensityHeader{"t", "i", "j", "re", "im", "stderr_re", "stderr_im"};

} // namespace

void write_density_csv(const std::filesystem::path& path, const EnsembleDensity& estimate) {
    csv::Writer out(path, kDensityHeader);
    for (std::size_t c = 0; c < estimate.times.size(); ++c) {
        const CMatrix& m = estimate.mean[c];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                out.field(estimate.times[c]).field(static_cast<std::int64_t>(i)).field(static_cast<std::int64_t>(j));
                out.field(m(i, j).real()).field(m(i, j).imag());
                out.field(estimate.stderr_re[c](i, j)).field(estimate.stderr_im[c](i, j));
                out.end_row();
            }
        }
    }
}

void write_density_csv(const std::filesystem::path& path, const DensityPath& path_values) {
    csv::Writer out(path, kDensityHeader);
    for (std::size_t c = 0; c < path_values.times.size(); ++c) {
        const CMatrix& m = path_values.rho[c];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                out.field(path_values.times[c]).field(static_cast<std::int64_t>(i)).field(static_cast<std::int64_t>(j));
                out.field(m(i, j).real()).field(m(i, j).imag()).field(0.0).field(0.0);
                out.end_row();
            }
        }
    }
}

} // namespace collapsim
