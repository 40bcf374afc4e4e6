#include "collapsim/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"

namespace collapsim {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

void require_positive(double value, const char* what) {
    if (!std::isfinite(value) || !(value > 0.0)) {
        throw Error(ErrorCode::Validation, std::string(what) + " must be finite and positive");
    }
}

void require_interval(double t, double t0, bool allow_minus_infinity) {
    if (std::isnan(t) || std::isnan(t0) || !std::isfinite(t)) {
        throw Error(ErrorCode::InvalidInterval, "interval endpoints must be numbers");
    }
    if (std::isinf(t0) && (t0 > 0 || !allow_minus_infinity)) {
        throw Error(ErrorCode::InvalidInterval, "lower limit must be finite here");
    }
    if (t < t0) {
        throw Error(ErrorCode::InvalidInterval, "t < t0");
    }
}

} // namespace

std::string_view to_string(KernelFamily family) noexcept {
    switch (family) {
    case KernelFamily::White: return "white";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Exponential: return "exponential";
    case KernelFamily::Tabulated: return "tabulated";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "white") return KernelFamily::White;
    if (lower == "gaussian") return KernelFamily::Gaussian;
    if (lower == "exponential") return KernelFamily::Exponential;
    if (lower == "tabulated") return KernelFamily::Tabulated;
    throw Error(ErrorCode::Validation, "unknown kernel family '" + std::string(name) + "'");
}

CorrelationKernel::CorrelationKernel(KernelFamily family, double gamma, double tau)
    : family_(family), gamma_(gamma), tau_(tau) {
    require_positive(gamma, "kernel gamma");
}

CorrelationKernel CorrelationKernel::white(double gamma) {
    return CorrelationKernel(KernelFamily::White, gamma, 0.0);
}

CorrelationKernel CorrelationKernel::gaussian(double gamma, double tau) {
    require_positive(tau, "kernel tau");
    return CorrelationKernel(KernelFamily::Gaussian, gamma, tau);
}

CorrelationKernel CorrelationKernel::exponential(double gamma, double tau) {
    require_positive(tau, "kernel tau");
    return CorrelationKernel(KernelFamily::Exponential, gamma, tau);
}

CorrelationKernel CorrelationKernel::tabulated(double gamma, std::vector<double> lags,
                                               std::vector<double> values) {
    if (lags.size() != values.size() || lags.size() < 2) {
        throw Error(ErrorCode::Validation, "tabulated kernel needs >= 2 (lag, D) pairs");
    }
    if (lags.front() != 0.0) {
        throw Error(ErrorCode::Validation, "tabulated kernel lags must start at 0");
    }
    for (std::size_t k = 0; k < lags.size(); ++k) {
        if (!std::isfinite(lags[k]) || !std::isfinite(values[k])) {
            throw Error(ErrorCode::Validation, "tabulated kernel entries must be finite");
        }
        if (k > 0 && !(lags[k] > lags[k - 1])) {
            throw Error(ErrorCode::Validation, "tabulated kernel lags must be strictly increasing");
        }
    }
    CorrelationKernel k(KernelFamily::Tabulated, gamma, 0.0);
    k.lags_ = std::move(lags);
    k.values_ = std::move(values);
    const std::size_t n = k.lags_.size();
    k.prefix_integral_.assign(n, 0.0);
    k.prefix_moment_.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = k.lags_[i + 1] - k.lags_[i];
        const double v0 = k.values_[i];
        const double slope = (k.values_[i + 1] - v0) / h;
        const double u0 = k.lags_[i];
        k.prefix_integral_[i + 1] = k.prefix_integral_[i] + v0 * h + slope * h * h / 2.0;
        k.prefix_moment_[i + 1] =
            k.prefix_moment_[i] + u0 * v0 * h + (u0 * slope + v0) * h * h / 2.0 + slope * h * h * h / 3.0;
    }
    return k;
}

CorrelationKernel CorrelationKernel::tabulated_from_csv(double gamma, const std::filesystem::path& path) {
    const auto rows = csv::read_numeric(path);
    std::vector<double> lags;
    std::vector<double> values;
    for (const auto& row : rows) {
        if (row.size() != 2) {
            throw Error(ErrorCode::Validation,
                        path.string() + ": kernel tables must be stationary two-column (lag, D) data");
        }
        lags.push_back(row[0]);
        values.push_back(row[1]);
    }
    return tabulated(gamma, std::move(lags), std::move(values));
}

std::size_t CorrelationKernel::table_segment(double lag) const {
    // Last knot index i with lags_[i] <= lag, capped so that i + 1 is valid.
    auto it = std::upper_bound(lags_.begin(), lags_.end(), lag);
    std::size_t i = static_cast<std::size_t>(it - lags_.begin());
    i = i == 0 ? 0 : i - 1;
    return std::min(i, lags_.size() - 2);
}

double CorrelationKernel::eval_lag(double u) const {
    if (!std::isfinite(u)) {
        throw Error(ErrorCode::OutOfRange, "kernel lag must be finite");
    }
    const double lag = std::abs(u);
    switch (family_) {
    case KernelFamily::White:
        throw Error(ErrorCode::UnsupportedPointwiseEval, "white kernel has no pointwise value");
    case KernelFamily::Gaussian:
        return std::exp(-lag * lag / (2.0 * tau_ * tau_)) / (kSqrt2Pi * tau_);
    case KernelFamily::Exponential:
        return std::exp(-lag / tau_) / (2.0 * tau_);
    case KernelFamily::Tabulated: {
        if (lag > lags_.back()) {
            throw Error(ErrorCode::OutOfRange, "lag " + std::to_string(lag) + " beyond kernel table");
        }
        const std::size_t i = table_segment(lag);
        const double w = (lag - lags_[i]) / (lags_[i + 1] - lags_[i]);
        return values_[i] + w * (values_[i + 1] - values_[i]);
    }
    }
    return 0.0;
}

double CorrelationKernel::eval(double t1, double t2) const {
    if (!std::isfinite(t1) || !std::isfinite(t2)) {
        throw Error(ErrorCode::OutOfRange, "kernel arguments must be finite");
    }
    if (family_ == KernelFamily::White) {
        throw Error(ErrorCode::UnsupportedPointwiseEval, "white kernel has no pointwise value");
    }
    return eval_lag(t1 - t2);
}

double CorrelationKernel::table_integral(double upper) const {
    if (upper > lags_.back() * (1.0 + 1e-12)) {
        throw Error(ErrorCode::OutOfRange, "integration range beyond kernel table");
    }
    upper = std::min(upper, lags_.back());
    const std::size_t i = table_segment(upper);
    const double d = upper - lags_[i];
    const double slope = (values_[i + 1] - values_[i]) / (lags_[i + 1] - lags_[i]);
    return prefix_integral_[i] + values_[i] * d + slope * d * d / 2.0;
}

double CorrelationKernel::table_first_moment(double upper) const {
    if (upper > lags_.back() * (1.0 + 1e-12)) {
        throw Error(ErrorCode::OutOfRange, "integration range beyond kernel table");
    }
    upper = std::min(upper, lags_.back());
    const std::size_t i = table_segment(upper);
    const double d = upper - lags_[i];
    const double u0 = lags_[i];
    const double v0 = values_[i];
    const double slope = (values_[i + 1] - v0) / (lags_[i + 1] - lags_[i]);
    return prefix_moment_[i] + u0 * v0 * d + (u0 * slope + v0) * d * d / 2.0 + slope * d * d * d / 3.0;
}

double CorrelationKernel::cumulative(double t, double t0) const {
    require_interval(t, t0, family_ != KernelFamily::Tabulated);
    if (std::isinf(t0)) {
        // Full history: half of the normalized mass.
        return 0.5;
    }
    const double span = t - t0;
    switch (family_) {
    case KernelFamily::White:
        // The delta sits on the interval edge and contributes half its mass.
        return 0.5;
    case KernelFamily::Gaussian:
        return 0.5 * std::erf(span / (kSqrt2 * tau_));
    case KernelFamily::Exponential:
        return -0.5 * std::expm1(-span / tau_);
    case KernelFamily::Tabulated:
        return table_integral(span);
    }
    return 0.0;
}

double CorrelationKernel::double_integral(double t, double t0) const {
    require_interval(t, t0, false);
    const double span = t - t0;
    switch (family_) {
    case KernelFamily::White:
        return span;
    case KernelFamily::Gaussian: {
        const double x = span / tau_;
        if (x < 1e-3) {
            return (span * span - span * span * x * x / 12.0) / (kSqrt2Pi * tau_);
        }
        return span * std::erf(x / kSqrt2) + 2.0 * tau_ / kSqrt2Pi * std::expm1(-x * x / 2.0);
    }
    case KernelFamily::Exponential: {
        const double x = span / tau_;
        if (x < 1e-3) {
            return tau_ * x * x * (0.5 - x / 6.0 + x * x / 24.0);
        }
        return span + tau_ * std::expm1(-x);
    }
    case KernelFamily::Tabulated:
        return 2.0 * (span * table_integral(span) - table_first_moment(span));
    }
    return 0.0;
}

DivergenceReport divergence_check(const CorrelationKernel& kernel, double horizon, double t0,
                                  std::size_t samples) {
    if (!(horizon > t0) || !std::isfinite(horizon) || !std::isfinite(t0)) {
        throw Error(ErrorCode::InvalidInterval, "divergence check needs finite horizon > t0");
    }
    samples = std::max<std::size_t>(samples, 3);
    DivergenceReport report;
    const double span = horizon - t0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double exponent = static_cast<double>(samples - 1 - i);
        const double t = (i + 1 == samples) ? horizon : t0 + span * std::pow(0.5, exponent);
        report.times.push_back(t);
        report.f_values.push_back(kernel.double_integral(t, t0));
    }
    report.nondecreasing = true;
    for (std::size_t i = 1; i < samples; ++i) {
        const double tol = 1e-12 * std::max(1.0, std::abs(report.f_values[i - 1]));
        if (report.f_values[i] < report.f_values[i - 1] - tol) {
            report.nondecreasing = false;
        }
    }
    const std::size_t n = samples;
    report.final_slope = (report.f_values[n - 1] - report.f_values[n - 2]) / (report.times[n - 1] - report.times[n - 2]);
    // gamma * slope compared against 1e-6 * gamma.
    report.diverges = report.nondecreasing && kernel.gamma() * report.final_slope > 1e-6 * kernel.gamma();
    return report;
}

} // namespace collapsim
