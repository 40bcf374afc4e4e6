#include "collapsim/macrobody.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/parallel.hpp"

namespace collapsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
template <std::size_t N>
struct GaussLegendre {
    std::array<double, N> nodes{};
    std::array<double, N> weights{};

    GaussLegendre() {
        for (std::size_t i = 0; i < N; ++i) {
            double x = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(N) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0;
                double p1 = x;
                for (std::size_t k = 2; k <= N; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                    p0 = p1;
                    p1 = p2;
                }
                dp = static_cast<double>(N) * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }

    template <typename Fn>
    double integrate(Fn&& fn, double a, double b) const {
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            sum += weights[i] * fn(mid + half * nodes[i]);
        }
        return sum * half;
    }
};

const GaussLegendre<16>& gauss16() {
    static const GaussLegendre<16> rule;
    return rule;
}

double pair_sum(const MacroBody& body, const Eigen::Vector3d& shift, double alpha) {
    CompensatedSum sum;
    for (const auto& qi : body.offsets) {
        for (const auto& qj : body.offsets) {
            sum.add(std::exp(-0.25 * alpha * (shift + qi - qj).squaredNorm()));
        }
    }
    return sum.value();
}

void check_time(const MacroParams& params, double t) {
    if (!(t >= params.t0)) {
        throw Error(ErrorCode::InvalidInterval, "time precedes t0");
    }
}

} // namespace

double MacroParams::gamma() const {
    return lambda * std::pow(4.0 * kPi / alpha, 1.5);
}

double MacroParams::effective_beta() const {
    return beta > 0.0 ? beta : kSpeedOfLight * kSpeedOfLight * alpha;
}

void MacroParams::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw Error(ErrorCode::Validation, "alpha must be positive");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::Validation, "lambda must be positive");
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw Error(ErrorCode::Validation, "beta must be positive (or zero for the default)");
    }
    if (!std::isfinite(t0)) {
        throw Error(ErrorCode::Validation, "t0 must be finite");
    }
}

void MacroBody::validate() const {
    if (offsets.empty()) {
        throw Error(ErrorCode::Validation, "a body needs at least one constituent");
    }
    for (const auto& q : offsets) {
        if (!q.allFinite()) {
            throw Error(ErrorCode::Validation, "constituent offsets must be finite");
        }
    }
}

MacroBody MacroBody::from_csv(const std::filesystem::path& path) {
    MacroBody body;
    for (const auto& row : csv::read_numeric(path)) {
        if (row.size() != 4) {
            throw Error(ErrorCode::Validation, "body CSV rows must have 4 columns (i, qx, qy, qz)");
        }
        body.offsets.emplace_back(row[1], row[2], row[3]);
    }
    body.validate();
    return body;
}

MacroBody MacroBody::cubic_lattice(std::size_t count, double spacing) {
    if (count == 0 || !(spacing > 0.0)) {
        throw Error(ErrorCode::Validation, "lattice needs a positive count and spacing");
    }
    std::size_t side = 1;
    while (side * side * side < count) {
        ++side;
    }
    MacroBody body;
    body.offsets.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto ix = static_cast<double>(k % side);
        const auto iy = static_cast<double>((k / side) % side);
        const auto iz = static_cast<double>(k / (side * side));
        body.offsets.emplace_back(ix * spacing, iy * spacing, iz * spacing);
    }
    return body;
}

double FactorizedKernel::space(const Eigen::Vector3d& r) const {
    return params.gamma() * std::pow(params.alpha / (4.0 * kPi), 1.5) * std::exp(-0.25 * params.alpha * r.squaredNorm());
}

double FactorizedKernel::time(double u) const {
    const double b = params.effective_beta();
    return std::sqrt(b / (4.0 * kPi)) * std::exp(-0.25 * b * u * u);
}

FactorizedKernel kernel_factorized(const MacroParams& params) {
    params.validate();
    return FactorizedKernel{params};
}

double gamma_of_t(const MacroParams& params, double t) {
    check_time(params, t);
    return params.gamma() * std::erf(0.5 * std::sqrt(params.effective_beta()) * (t - params.t0));
}

double smeared_density(const MacroBody& body, const Eigen::Vector3d& q, const Eigen::Vector3d& x,
                       const MacroParams& params) {
    CompensatedSum sum;
    for (const auto& qi : body.offsets) {
        sum.add(std::exp(-0.5 * params.alpha * (q + qi - x).squaredNorm()));
    }
    return std::pow(params.alpha / (2.0 * kPi), 1.5) * sum.value();
}

double damping_spatial_factor(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                              const MacroParams& params) {
    body.validate();
    const Eigen::Vector3d dq = q1 - q2;
    if (dq.isZero(0.0)) {
        return 0.0;
    }
    const double same = pair_sum(body, Eigen::Vector3d::Zero(), params.alpha);
    const double cross = pair_sum(body, dq, params.alpha);
    return std::pow(params.alpha / (4.0 * kPi), 1.5) * std::max(0.0, same - cross);
}

double macro_damping_rate(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2, double t,
                          const MacroParams& params) {
    return gamma_of_t(params, t) * damping_spatial_factor(body, q1, q2, params);
}

double macro_damping_rate_quadrature(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                                     double t, const MacroParams& params, double spacing_factor, double padding) {
    body.validate();
    const double scale = 1.0 / std::sqrt(params.alpha);
    const std::size_t n = body.size();

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto& qi : body.offsets) {
        for (const Eigen::Vector3d& c : {Eigen::Vector3d(q1 + qi), Eigen::Vector3d(q2 + qi)}) {
            lo = lo.cwiseMin(c);
            hi = hi.cwiseMax(c);
        }
    }
    lo.array() -= padding * scale;
    hi.array() += padding * scale;

    // The integrand separates per constituent and axis: tabulate the 1-D factors.
    std::array<std::size_t, 3> points{};
    std::array<double, 3> step{};
    std::array<std::vector<double>, 3> e1;
    std::array<std::vector<double>, 3> e2;
    for (int axis = 0; axis < 3; ++axis) {
        const double length = hi(axis) - lo(axis);
        points[axis] = static_cast<std::size_t>(std::ceil(length / (spacing_factor * scale))) + 1;
        step[axis] = length / static_cast<double>(points[axis] - 1);
        e1[axis].resize(n * points[axis]);
        e2[axis].resize(n * points[axis]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < points[axis]; ++p) {
                const double x = lo(axis) + static_cast<double>(p) * step[axis];
                const double d1 = x - (q1(axis) + body.offsets[i](axis));
                const double d2 = x - (q2(axis) + body.offsets[i](axis));
                e1[axis][i * points[axis] + p] = std::exp(-0.5 * params.alpha * d1 * d1);
                e2[axis][i * points[axis] + p] = std::exp(-0.5 * params.alpha * d2 * d2);
            }
        }
    }

    // The integrand is negligible on the box faces, so the plain sum is the trapezoid rule.
    const double norm = std::pow(params.alpha / (2.0 * kPi), 1.5);
    CompensatedSum total;
    for (std::size_t ix = 0; ix < points[0]; ++ix) {
        for (std::size_t iy = 0; iy < points[1]; ++iy) {
            double plane = 0.0;
            for (std::size_t iz = 0; iz < points[2]; ++iz) {
                double f1 = 0.0;
                double f2 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    f1 += e1[0][i * points[0] + ix] * e1[1][i * points[1] + iy] * e1[2][i * points[2] + iz];
                    f2 += e2[0][i * points[0] + ix] * e2[1][i * points[1] + iy] * e2[2][i * points[2] + iz];
                }
                const double diff = norm * (f1 - f2);
                plane += 0.5 * diff * diff;
            }
            total.add(plane);
        }
    }
    return gamma_of_t(params, t) * total.value() * step[0] * step[1] * step[2];
}

double integrated_gamma(const MacroParams& params, double t) {
    check_time(params, t);
    const double a = 0.5 * std::sqrt(params.effective_beta());
    const double s = t - params.t0;
    // int_0^s erf(a u) du = s erf(a s) + (exp(-a^2 s^2) - 1) / (a sqrt(pi))
    return params.gamma() * (s * std::erf(a * s) + std::expm1(-a * a * s * s) / (a * std::sqrt(kPi)));
}

namespace {

// int_{ta}^{tb} gamma(u) du. Beyond 12 / sqrt(beta) the error function equals 1
// to double precision and the integrand is the constant gamma.
double gamma_segment(const MacroParams& params, double ta, double tb) {
    const double ramp_end = params.t0 + 12.0 / std::sqrt(params.effective_beta());
    double sum = 0.0;
    const double a = std::min(ta, ramp_end);
    const double b = std::min(tb, ramp_end);
    if (b > a) {
        constexpr int panels = 8;
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            sum += gauss16().integrate([&](double u) { return gamma_of_t(params, u); }, a + p * h, a + (p + 1) * h);
        }
    }
    const double flat_start = std::max(ta, ramp_end);
    if (tb > flat_start) {
        sum += params.gamma() * (tb - flat_start);
    }
    return sum;
}

} // namespace

std::vector<double> com_offdiag_decay(const MacroBody& body, const Eigen::Vector3d& q1, const Eigen::Vector3d& q2,
                                      const TimeGrid& grid, const MacroParams& params) {
    params.validate();
    check_time(params, grid.t0());
    const double spatial = damping_spatial_factor(body, q1, q2, params);
    std::vector<double> out(grid.num_nodes(), 1.0);
    double exponent = grid.t0() > params.t0 ? gamma_segment(params, params.t0, grid.t0()) * spatial : 0.0;
    out[0] = std::exp(-exponent);
    for (std::size_t k = 1; k < grid.num_nodes(); ++k) {
        exponent += spatial * gamma_segment(params, grid.node(k - 1), grid.node(k));
        out[k] = std::exp(-exponent);
    }
    return out;
}

double saturated_rate(const MacroParams& params, double constituents) {
    return params.lambda * constituents;
}

double unit_bridge(const MacroParams& params) {
    return params.gamma() * std::pow(params.alpha / (4.0 * kPi), 1.5);
}

std::vector<RateRow> rate_table(const MacroBody& body, std::span<const double> separations, const TimeGrid& grid,
                                const MacroParams& params) {
    std::vector<RateRow> rows;
    const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    for (double d : separations) {
        const Eigen::Vector3d target(d, 0.0, 0.0);
        const std::vector<double> decay = com_offdiag_decay(body, origin, target, grid, params);
        for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
            const double t = grid.node(k);
            rows.push_back({std::abs(d), t, macro_damping_rate(body, origin, target, t, params), decay[k]});
        }
    }
    return rows;
}

void write_rate_csv(const std::filesystem::path& path, std::span<const RateRow> rows) {
    csv::Writer out(path, {"|dQ|", "t", "Gamma", "decay_factor"});
    for (const auto& r : rows) {
        out.field(r.separation).field(r.t).field(r.gamma_rate).field(r.decay_factor);
        out.end_row();
    }
}

} // namespace collapsim
