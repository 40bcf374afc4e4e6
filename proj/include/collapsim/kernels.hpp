// Noise correlation kernels <<w(t1) w(t2)>> = gamma * D(t1, t2) and their time integrals.
//
// D is kept normalized; gamma is stored on the kernel and applied only where a
// covariance or a rate is built. For the stationary families shipped here
// D(t1, t2) depends on |t1 - t2| only.
//
//   G(t; t0) = int_{t0}^{t} D(t, s) ds           (cumulative)
//   f(t; t0) = int_{t0}^{t} int_{t0}^{t} D        (double integral, Var[x(t)] / gamma)
//
// and, by symmetry of D, df/dt = 2 G.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace collapsim {

enum class KernelFamily { White, Gaussian, Exponential, Tabulated };

std::string_view to_string(KernelFamily family) noexcept;
/// Parses "white" | "gaussian" | "exponential" | "tabulated" (case-insensitive).
KernelFamily parse_kernel_family(std::string_view name);

class CorrelationKernel {
public:
    static CorrelationKernel white(double gamma);
    /// D(u) = exp(-u^2 / 2 tau^2) / (sqrt(2 pi) tau)
    static CorrelationKernel gaussian(double gamma, double tau);
    /// D(u) = exp(-|u| / tau) / (2 tau)
    static CorrelationKernel exponential(double gamma, double tau);
    /// Stationary table D(|t1 - t2|) on strictly increasing lags starting at 0,
    /// linearly interpolated between knots.
    static CorrelationKernel tabulated(double gamma, std::vector<double> lags, std::vector<double> values);
    /// Two-column CSV (lag, D); an optional non-numeric header line is skipped.
    static CorrelationKernel tabulated_from_csv(double gamma, const std::filesystem::path& path);

    KernelFamily family() const noexcept { return family_; }
    double gamma() const noexcept { return gamma_; }
    /// Correlation time; zero for White and Tabulated.
    double tau() const noexcept { return tau_; }
    bool is_white() const noexcept { return family_ == KernelFamily::White; }

    const std::vector<double>& table_lags() const noexcept { return lags_; }
    const std::vector<double>& table_values() const noexcept { return values_; }

    /// D(t1, t2) without the gamma prefactor.
    double eval(double t1, double t2) const;
    /// D as a function of the lag u = t1 - t2.
    double eval_lag(double u) const;

    /// G(t; t0). t0 may be -infinity for the closed-form families.
    double cumulative(double t, double t0) const;

    /// f(t; t0), t0 finite.
    double double_integral(double t, double t0) const;

private:
    CorrelationKernel(KernelFamily family, double gamma, double tau);

    double table_integral(double upper) const;          // int_0^upper D(u) du
    double table_first_moment(double upper) const;      // int_0^upper u D(u) du
    std::size_t table_segment(double lag) const;

    KernelFamily family_;
    double gamma_;
    double tau_;
    std::vector<double> lags_;
    std::vector<double> values_;
    std::vector<double> prefix_integral_;
    std::vector<double> prefix_moment_;
};

struct DivergenceReport {
    std::vector<double> times;
    std::vector<double> f_values;
    bool nondecreasing = false;
    /// df/dt over the last pair of sample times.
    double final_slope = 0.0;
    /// Reduction condition: f nondecreasing and still growing at the horizon.
    bool diverges = false;
};

/// Samples f on a geometric sequence of times ending at `horizon`.
DivergenceReport divergence_check(const CorrelationKernel& kernel, double horizon, double t0,
                                  std::size_t samples = 24);

} // namespace collapsim
