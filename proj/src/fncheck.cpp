#include "collapsim/fncheck.hpp"

#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/grid.hpp"
#include "collapsim/noise.hpp"
#include "collapsim/parallel.hpp"

namespace collapsim {

std::string_view to_string(Functional functional) noexcept {
    switch (functional) {
    case Functional::Constant: return "constant";
    case Functional::LinearX: return "linear-x";
    case Functional::ExpX: return "exp-x";
    }
    return "unknown";
}

Functional parse_functional(std::string_view name) {
    std::string lower;
    for (char c : name) {
        lower.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (lower == "constant") return Functional::Constant;
    if (lower == "linear-x" || lower == "linearx") return Functional::LinearX;
    if (lower == "exp-x" || lower == "expx") return Functional::ExpX;
    throw Error(ErrorCode::UnknownFunctional, "unknown functional '" + std::string(name) + "'");
}

double fn_rhs(const CorrelationKernel& kernel, Functional functional, double t, double t0) {
    switch (functional) {
    case Functional::Constant:
        return 0.0;
    case Functional::LinearX:
        return kernel.gamma() * kernel.cumulative(t, t0);
    case Functional::ExpX:
        return kernel.gamma() * kernel.cumulative(t, t0) *
               std::exp(0.5 * kernel.gamma() * kernel.double_integral(t, t0));
    }
    throw Error(ErrorCode::UnknownFunctional, "unknown functional");
}

double kernel_integral_quadrature(const CorrelationKernel& kernel, double t, double t0, std::size_t panels) {
    if (kernel.is_white()) {
        throw Error(ErrorCode::UnsupportedPointwiseEval, "white kernel has no pointwise quadrature");
    }
    if (panels < 2 || panels % 2 != 0) {
        throw Error(ErrorCode::Validation, "Simpson quadrature needs an even panel count");
    }
    if (!(t > t0)) {
        throw Error(ErrorCode::InvalidInterval, "quadrature needs t > t0");
    }
    const double h = (t - t0) / static_cast<double>(panels);
    CompensatedSum sum;
    for (std::size_t k = 0; k <= panels; ++k) {
        const double s = k == panels ? t : t0 + static_cast<double>(k) * h;
        const double weight = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        sum.add(weight * kernel.eval(t, s));
    }
    return sum.value() * h / 3.0;
}

FnReport fn_validate(const CorrelationKernel& kernel, Functional functional, double t, double t0, std::size_t n,
                     std::uint64_t master_seed, std::size_t steps, unsigned workers) {
    if (n < 2) {
        throw Error(ErrorCode::Validation, "at least two samples are required");
    }
    const TimeGrid grid(t0, t, steps);
    const NoiseSource source = kernel.is_white() ? NoiseSource::white(grid, kernel.gamma(), 1)
                                                 : NoiseSource::colored(grid, kernel, 1);

    std::vector<double> products(n);
    parallel_for(n, workers, [&](std::size_t k) {
        const NoiseRealization path = source.draw(master_seed, k);
        const Eigen::VectorXd w = path.w.row(0).transpose();
        const double x_t = integrate_trapezoid(w, grid.dt())(w.size() - 1);
        const double w_t = w(w.size() - 1);
        double value = 0.0;
        switch (functional) {
        case Functional::Constant: value = 1.0; break;
        case Functional::LinearX: value = x_t; break;
        case Functional::ExpX: value = std::exp(x_t); break;
        }
        products[k] = value * w_t;
    });

    FnReport out;
    out.kernel = kernel.family();
    out.functional = functional;
    out.samples = n;
    const MeanStderr ms = mean_stderr(products);
    out.lhs = ms.mean;
    out.lhs_stderr = ms.sem;
    out.rhs = fn_rhs(kernel, functional, t, t0);
    out.sigmas = ms.sem > 0.0 ? std::abs(out.lhs - out.rhs) / ms.sem : 0.0;
    return out;
}

void write_fn_report(const std::filesystem::path& path, std::span<const FnReport> reports) {
    csv::Writer out(path, {"kernel", "functional", "lhs", "rhs", "stderr", "sigmas"});
    for (const auto& r : reports) {
        out.field(to_string(r.kernel)).field(to_string(r.functional));
        out.field(r.lhs).field(r.rhs).field(r.lhs_stderr).field(r.sigmas);
        out.end_row();
    }
}

} // namespace collapsim
