#include "collapsim/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/parallel.hpp"
#include "collapsim/rng.hpp"

namespace collapsim {

Eigen::VectorXd integrate_trapezoid(const Eigen::VectorXd& w, double dt) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.size());
    for (Eigen::Index k = 1; k < w.size(); ++k) {
        x(k) = x(k - 1) + 0.5 * dt * (w(k - 1) + w(k));
    }
    return x;
}

Eigen::VectorXd integrate_left(const Eigen::VectorXd& w, double dt) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.size());
    for (Eigen::Index k = 1; k < w.size(); ++k) {
        x(k) = x(k - 1) + w(k - 1) * dt;
    }
    return x;
}

void NoiseRealization::integrate() {
    x.resize(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const Eigen::VectorXd row = w.row(i).transpose();
        x.row(i) = (kind == NoiseKind::White ? integrate_left(row, dt) : integrate_trapezoid(row, dt)).transpose();
    }
}

Eigen::MatrixXd build_covariance(const TimeGrid& grid, const CorrelationKernel& kernel) {
    if (kernel.is_white()) {
        throw Error(ErrorCode::UnsupportedPointwiseEval, "white noise bypasses the covariance path");
    }
    const auto n = static_cast<Eigen::Index>(grid.num_nodes());
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) {
            const double v = kernel.gamma() * kernel.eval(grid.node(static_cast<std::size_t>(k)),
                                                          grid.node(static_cast<std::size_t>(l)));
            c(k, l) = v;
            c(l, k) = v;
        }
    }
    return c;
}

double psd_floor_ratio(const Eigen::MatrixXd& covariance) {
    const double max_diag = covariance.diagonal().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() / max_diag;
}

CovarianceFactor factorize_covariance(const Eigen::MatrixXd& covariance) {
    const double max_diag = covariance.diagonal().maxCoeff();
    if (!(max_diag > 0.0) || !covariance.allFinite()) {
        throw Error(ErrorCode::KernelNotPSD, "covariance diagonal must be positive and finite");
    }
    for (double scale = 1e-12; scale <= 1e-8 * 1.0001; scale *= 10.0) {
        CovarianceFactor out;
        out.jitter = scale * max_diag;
        out.covariance = covariance;
        out.covariance.diagonal().array() += out.jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(out.covariance);
        if (llt.info() == Eigen::Success) {
            out.lower = llt.matrixL();
            return out;
        }
    }
    throw Error(ErrorCode::KernelNotPSD, "Cholesky failed with jitter up to 1e-8 * max diag");
}

NoiseSource::NoiseSource(const TimeGrid& grid, NoiseKind kind, std::size_t processes)
    : grid_(grid), kind_(kind), processes_(processes) {
    if (processes == 0) {
        throw Error(ErrorCode::Validation, "noise source needs at least one process");
    }
}

NoiseSource NoiseSource::colored(const TimeGrid& grid, const CorrelationKernel& kernel, std::size_t processes) {
    auto factor = std::make_shared<const CovarianceFactor>(factorize_covariance(build_covariance(grid, kernel)));
    return colored(grid, std::move(factor), processes);
}

NoiseSource NoiseSource::colored(const TimeGrid& grid, std::shared_ptr<const CovarianceFactor> factor,
                                 std::size_t processes) {
    if (!factor || factor->lower.rows() != static_cast<Eigen::Index>(grid.num_nodes())) {
        throw Error(ErrorCode::Validation, "covariance factor does not match the grid");
    }
    NoiseSource src(grid, NoiseKind::Colored, processes);
    src.factor_ = std::move(factor);
    Eigen::VectorXd weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.num_nodes()), grid.dt());
    weights(0) *= 0.5;
    weights(weights.size() - 1) *= 0.5;
    src.cross_ = src.factor_->covariance * weights;
    src.final_variance_ = weights.dot(src.cross_);
    return src;
}

NoiseSource NoiseSource::white(const TimeGrid& grid, double gamma, std::size_t processes) {
    if (!std::isfinite(gamma) || !(gamma >= 0.0)) {
        throw Error(ErrorCode::Validation, "white noise gamma must be nonnegative");
    }
    NoiseSource src(grid, NoiseKind::White, processes);
    src.gamma_ = gamma;
    src.cross_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.num_nodes()), gamma);
    src.cross_(src.cross_.size() - 1) = 0.0;
    src.final_variance_ = gamma * grid.dt() * static_cast<double>(grid.steps());
    return src;
}

void NoiseSource::fill(NoiseRealization& out, std::uint64_t master_seed, std::uint64_t index) const {
    const auto nodes = static_cast<Eigen::Index>(grid_.num_nodes());
    out.master_seed = master_seed;
    out.index = index;
    out.kind = kind_;
    out.dt = grid_.dt();
    out.w.resize(static_cast<Eigen::Index>(processes_), nodes);
    rng::ChildStream stream(master_seed, index, rng::Domain::Noise);
    Eigen::VectorXd z(nodes);
    const double white_scale = kind_ == NoiseKind::White ? std::sqrt(gamma_ / grid_.dt()) : 0.0;
    for (std::size_t i = 0; i < processes_; ++i) {
        for (Eigen::Index k = 0; k < nodes; ++k) {
            z(k) = stream.normal();
        }
        if (kind_ == NoiseKind::White) {
            out.w.row(static_cast<Eigen::Index>(i)) = (white_scale * z).transpose();
        } else {
            out.w.row(static_cast<Eigen::Index>(i)) =
                (factor_->lower.triangularView<Eigen::Lower>() * z).transpose();
        }
    }
    out.log_proposal_ratio = 0.0;
}

NoiseRealization NoiseSource::draw(std::uint64_t master_seed, std::uint64_t index) const {
    NoiseRealization out;
    fill(out, master_seed, index);
    out.integrate();
    return out;
}

NoiseRealization NoiseSource::draw_tilted(std::uint64_t master_seed, std::uint64_t index,
                                          const TiltComponents& components) const {
    if (components.empty()) {
        throw Error(ErrorCode::Validation, "tilted proposal needs at least one component");
    }
    for (const auto& c : components) {
        if (c.size() != processes_) {
            throw Error(ErrorCode::Validation, "tilt component size must equal the process count");
        }
    }
    NoiseRealization out;
    fill(out, master_seed, index);
    rng::ChildStream chooser(master_seed, index, rng::Domain::Proposal);
    const std::size_t k = components.size();
    const std::size_t chosen = std::min(k - 1, static_cast<std::size_t>(chooser.uniform() * static_cast<double>(k)));
    for (std::size_t i = 0; i < processes_; ++i) {
        out.w.row(static_cast<Eigen::Index>(i)) += (2.0 * components[chosen][i] * cross_).transpose();
    }
    out.integrate();

    const Eigen::Index last = out.x.cols() - 1;
    std::vector<double> exponents(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < processes_; ++i) {
            const double a = components[c][i];
            exponents[c] += 2.0 * a * out.x(static_cast<Eigen::Index>(i), last) - 2.0 * a * a * final_variance_;
        }
    }
    const double peak = *std::max_element(exponents.begin(), exponents.end());
    CompensatedSum sum;
    for (double e : exponents) {
        sum.add(std::exp(e - peak));
    }
    out.log_proposal_ratio = -(peak + std::log(sum.value() / static_cast<double>(k)));
    return out;
}

std::vector<NoiseRealization> sample_paths(const NoiseSource& source, std::size_t n, std::uint64_t master_seed,
                                           unsigned workers) {
    if (n == 0) {
        throw Error(ErrorCode::Validation, "sample count must be >= 1");
    }
    std::vector<NoiseRealization> out(n);
    parallel_for(n, workers, [&](std::size_t i) { out[i] = source.draw(master_seed, i); });
    return out;
}

std::vector<NoiseRealization> sample_white_increments(const TimeGrid& grid, double gamma, std::size_t n,
                                                      std::uint64_t master_seed, std::size_t processes,
                                                      unsigned workers) {
    return sample_paths(NoiseSource::white(grid, gamma, processes), n, master_seed, workers);
}

void write_path_dump(const std::filesystem::path& path, const TimeGrid& grid,
                     std::span<const NoiseRealization> realizations) {
    const std::size_t m = realizations.empty() ? 1 : realizations.front().num_processes();
    std::vector<std::string> header = {"trajectory", "k", "t_k"};
    for (std::size_t i = 1; i <= m; ++i) header.push_back("w_" + std::to_string(i));
    for (std::size_t i = 1; i <= m; ++i) header.push_back("x_" + std::to_string(i));
    csv::Writer out(path, header);
    for (const auto& r : realizations) {
        for (std::size_t k = 0; k < r.num_nodes(); ++k) {
            out.field(r.index).field(k).field(grid.node(k));
            for (std::size_t i = 0; i < m; ++i) out.field(r.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
            for (std::size_t i = 0; i < m; ++i) out.field(r.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
            out.end_row();
        }
    }
}

} // namespace collapsim
