#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "collapsim/error.hpp"
#include "collapsim/grid.hpp"
#include "collapsim/kernels.hpp"
#include "collapsim/noise.hpp"

using namespace collapsim;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson rule, used as an independent quadrature oracle.
double simpson(const std::function<double(double)>& fn, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double sum = fn(a) + fn(b);
    for (int k = 1; k < panels; ++k) {
        sum += (k % 2 == 1 ? 4.0 : 2.0) * fn(a + k * h);
    }
    return sum * h / 3.0;
}

// 2-D trapezoid of D over [0, T]^2.
double trapezoid_2d(const CorrelationKernel& k, double T, double h) {
    const int n = static_cast<int>(std::lround(T / h));
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            const double wi = (i == 0 || i == n) ? 0.5 : 1.0;
            const double wj = (j == 0 || j == n) ? 0.5 : 1.0;
            sum += wi * wj * k.eval(i * h, j * h);
        }
    }
    return sum * h * h;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::Io;
}

std::vector<CorrelationKernel> pointwise_families() {
    std::vector<double> lags;
    std::vector<double> values;
    for (int i = 0; i <= 400; ++i) {
        lags.push_back(i * 0.05);
        values.push_back(0.5 * std::exp(-i * 0.05));
    }
    return {CorrelationKernel::gaussian(1.3, 0.7), CorrelationKernel::exponential(0.8, 1.5),
            CorrelationKernel::tabulated(1.0, lags, values)};
}

// D(u) = cos(pi u / 2L) + 3 cos(3 pi u / 2L) on [0, L], zero beyond: integrates to 0.
CorrelationKernel oscillating_table(double L, double horizon) {
    std::vector<double> lags;
    std::vector<double> values;
    const int n = 10000;
    for (int i = 0; i <= n; ++i) {
        const double u = L * i / n;
        lags.push_back(u);
        values.push_back(i == n ? 0.0 : std::cos(kPi * u / (2 * L)) + 3.0 * std::cos(3.0 * kPi * u / (2 * L)));
    }
    for (double u = 2 * L; u < 2 * horizon; u *= 2) {
        lags.push_back(u);
        values.push_back(0.0);
    }
    return CorrelationKernel::tabulated(1.0, lags, values);
}

} // namespace

TEST(KernelEval, GaussianPeak) {
    EXPECT_NEAR(CorrelationKernel::gaussian(1.0, 1.0).eval(0.0, 0.0), 0.3989422804014327, 1e-15);
}

TEST(KernelEval, ExponentialAtTwoTau) {
    EXPECT_NEAR(CorrelationKernel::exponential(1.0, 2.0).eval(5.0, 3.0), 0.09196986029286058, 1e-15);
}

TEST(KernelEval, GammaNotApplied) {
    EXPECT_EQ(CorrelationKernel::gaussian(7.0, 1.0).eval(0.0, 0.0), CorrelationKernel::gaussian(1.0, 1.0).eval(0.0, 0.0));
}

TEST(KernelEval, WhiteHasNoPointwiseValue) {
    EXPECT_EQ(code_of([] { (void)CorrelationKernel::white(1.0).eval(0.0, 0.0); }), ErrorCode::UnsupportedPointwiseEval);
}

TEST(KernelEval, TabulatedOutOfRange) {
    auto k = CorrelationKernel::tabulated(1.0, {0.0, 1.0, 2.0}, {1.0, 0.5, 0.0});
    EXPECT_DOUBLE_EQ(k.eval(0.0, 1.5), 0.25);
    EXPECT_EQ(code_of([&] { (void)k.eval(0.0, 2.5); }), ErrorCode::OutOfRange);
}

TEST(KernelEval, TabulatedValidation) {
    EXPECT_THROW(CorrelationKernel::tabulated(1.0, {0.1, 1.0}, {1.0, 0.5}), Error);
    EXPECT_THROW(CorrelationKernel::tabulated(1.0, {0.0, 1.0, 1.0}, {1.0, 0.5, 0.2}), Error);
    EXPECT_THROW(CorrelationKernel::tabulated(1.0, {0.0}, {1.0}), Error);
}

TEST(KernelEval, TabulatedFromCsv) {
    const auto dir = std::filesystem::temp_directory_path() / "collapsim_test_kernels";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "table.csv");
        out << "lag,D\n0,1\n1,0.5\n2,0\n";
    }
    auto k = CorrelationKernel::tabulated_from_csv(2.0, dir / "table.csv");
    EXPECT_EQ(k.family(), KernelFamily::Tabulated);
    EXPECT_DOUBLE_EQ(k.eval_lag(0.5), 0.75);
    {
        std::ofstream out(dir / "nonstationary.csv");
        out << "t1,t2,D\n0,0,1\n0,1,0.5\n";
    }
    EXPECT_THROW(CorrelationKernel::tabulated_from_csv(1.0, dir / "nonstationary.csv"), Error);
}

TEST(KernelEval, SymmetryOnGrid) {
    TimeGrid grid(0.0, 5.0, 49);
    for (const auto& k : pointwise_families()) {
        for (std::size_t a = 0; a < grid.num_nodes(); ++a) {
            for (std::size_t b = 0; b < grid.num_nodes(); ++b) {
                ASSERT_EQ(k.eval(grid.node(a), grid.node(b)), k.eval(grid.node(b), grid.node(a)));
            }
        }
    }
}

TEST(KernelEval, Normalization) {
    for (const auto& k : {CorrelationKernel::gaussian(1.0, 0.7), CorrelationKernel::exponential(1.0, 1.5)}) {
        const double tau = k.tau();
        const double total = simpson([&](double s) { return k.eval(0.0, s); }, -40 * tau, 0.0, 40000) +
                             simpson([&](double s) { return k.eval(0.0, s); }, 0.0, 40 * tau, 40000);
        EXPECT_NEAR(total, 1.0, 1e-8);
    }
}

TEST(KernelCumulative, ExponentialAtTau) {
    EXPECT_NEAR(CorrelationKernel::exponential(1.0, 2.0).cumulative(3.0, 1.0), 0.31606027941427883, 1e-15);
}

TEST(KernelCumulative, InfinitePast) {
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(CorrelationKernel::gaussian(1.0, 0.3).cumulative(2.0, -inf), 0.5);
    EXPECT_DOUBLE_EQ(CorrelationKernel::exponential(1.0, 0.3).cumulative(2.0, -inf), 0.5);
    EXPECT_DOUBLE_EQ(CorrelationKernel::white(1.0).cumulative(2.0, -inf), 0.5);
}

TEST(KernelCumulative, WhiteIsHalf) {
    auto w = CorrelationKernel::white(2.0);
    EXPECT_EQ(w.cumulative(1.0, 0.0), 0.5);
    EXPECT_EQ(w.cumulative(0.0, 0.0), 0.5);
}

TEST(KernelCumulative, ZeroLength) {
    for (const auto& k : pointwise_families()) {
        EXPECT_EQ(k.cumulative(1.0, 1.0), 0.0);
    }
}

TEST(KernelCumulative, QuadratureOracle) {
    for (const auto& k : pointwise_families()) {
        const double oracle = simpson([&](double s) { return k.eval(3.0, s); }, 0.5, 3.0, 4000);
        EXPECT_NEAR(k.cumulative(3.0, 0.5), oracle, 1e-6) << to_string(k.family());
    }
}

TEST(KernelCumulative, RejectsReversedInterval) {
    EXPECT_EQ(code_of([] { (void)CorrelationKernel::gaussian(1.0, 1.0).cumulative(0.0, 1.0); }),
              ErrorCode::InvalidInterval);
}

TEST(KernelDoubleIntegral, WhiteIsLength) {
    EXPECT_EQ(CorrelationKernel::white(1.0).double_integral(4.0, 0.5), 3.5);
}

TEST(KernelDoubleIntegral, ExponentialUnitTau) {
    auto k = CorrelationKernel::exponential(1.0, 1.0);
    EXPECT_NEAR(k.double_integral(1.0, 0.0), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(trapezoid_2d(k, 1.0, 1e-3), std::exp(-1.0), 1e-5);
}

TEST(KernelDoubleIntegral, GaussianOracle) {
    auto k = CorrelationKernel::gaussian(1.0, 0.8);
    for (double T : {0.01, 0.5, 2.0, 10.0}) {
        const double oracle = 2.0 * simpson([&](double u) { return (T - u) * k.eval_lag(u); }, 0.0, T, 20000);
        EXPECT_NEAR(k.double_integral(T, 0.0), oracle, 1e-10 * std::max(1.0, oracle)) << T;
    }
}

TEST(KernelDoubleIntegral, TabulatedMatchesTrapezoid) {
    auto k = pointwise_families()[2];
    EXPECT_NEAR(k.double_integral(2.0, 0.0), trapezoid_2d(k, 2.0, 0.005), 2e-5);
}

TEST(KernelDoubleIntegral, ZeroLength) {
    for (const auto& k : pointwise_families()) {
        EXPECT_EQ(k.double_integral(2.0, 2.0), 0.0);
    }
    EXPECT_EQ(CorrelationKernel::white(1.0).double_integral(2.0, 2.0), 0.0);
}

TEST(KernelDoubleIntegral, SmallIntervalSeries) {
    for (const auto& k : {CorrelationKernel::gaussian(1.0, 1.0), CorrelationKernel::exponential(1.0, 1.0)}) {
        const double T = 1e-7;
        EXPECT_NEAR(k.double_integral(T, 0.0) / (T * T * k.eval_lag(0.0)), 1.0, 1e-6);
        EXPECT_NEAR(k.cumulative(T, 0.0) / (T * k.eval_lag(0.0)), 1.0, 1e-6);
    }
}

TEST(KernelProperties, DerivativeOfFIsTwoG) {
    std::vector<CorrelationKernel> kernels = pointwise_families();
    kernels.push_back(CorrelationKernel::white(1.0));
    for (const auto& k : kernels) {
        for (double t : {0.3, 1.0, 4.0}) {
            const double h = 1e-4;
            const double d = (k.double_integral(t + h, 0.0) - k.double_integral(t - h, 0.0)) / (2 * h);
            EXPECT_NEAR(d / (2.0 * k.cumulative(t, 0.0)), 1.0, 1e-6) << to_string(k.family()) << " t=" << t;
        }
    }
}

TEST(KernelProperties, ShortCorrelationApproachesWhite) {
    const double T = 2.0;
    auto k = CorrelationKernel::exponential(1.0, 1e-3 * T);
    EXPECT_NEAR(k.double_integral(T, 0.0) / T, 1.0, 2e-3);
}

TEST(KernelProperties, CovariancePsdUpTo512Points) {
    for (const auto& k : {CorrelationKernel::gaussian(1.0, 0.5), CorrelationKernel::exponential(1.0, 0.5)}) {
        const TimeGrid grid(0.0, 10.0, 511);
        EXPECT_GE(psd_floor_ratio(build_covariance(grid, k)), -1e-10) << to_string(k.family());
    }
}

TEST(Divergence, White) {
    const auto r = divergence_check(CorrelationKernel::white(1.0), 100.0, 0.0);
    EXPECT_TRUE(r.diverges);
    EXPECT_NEAR(r.final_slope, 1.0, 1e-12);
}

TEST(Divergence, Exponential) {
    const auto r = divergence_check(CorrelationKernel::exponential(1.0, 1.0), 1000.0, 0.0);
    EXPECT_TRUE(r.nondecreasing);
    EXPECT_TRUE(r.diverges);
    EXPECT_NEAR(r.final_slope, 1.0, 1e-2);
}

TEST(Divergence, OscillatingTableIsFlagged) {
    const double L = 1.0;
    const double horizon = 200.0;
    const auto k = oscillating_table(L, horizon);
    // f(T >= L) = 32 L^2 / (3 pi^2) in closed form.
    EXPECT_NEAR(k.double_integral(5.0, 0.0), 32.0 / (3.0 * kPi * kPi), 1e-6);
    const auto r = divergence_check(k, horizon, 0.0);
    EXPECT_FALSE(r.diverges);
    EXPECT_LT(std::abs(r.final_slope), 1e-6);
}

TEST(KernelFamilyNames, RoundTrip) {
    for (auto f : {KernelFamily::White, KernelFamily::Gaussian, KernelFamily::Exponential, KernelFamily::Tabulated}) {
        EXPECT_EQ(parse_kernel_family(to_string(f)), f);
    }
    EXPECT_EQ(parse_kernel_family("GAUSSIAN"), KernelFamily::Gaussian);
    EXPECT_THROW(parse_kernel_family("lorentzian"), Error);
}
