#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "collapsim/dynamics.hpp"
#include "collapsim/error.hpp"
#include "collapsim/master.hpp"
#include "collapsim/parallel.hpp"

using namespace collapsim;

namespace {

QuantumSystem qubit(std::optional<CMatrix> h = std::nullopt) {
    Eigen::MatrixXd table(1, 2);
    table << 1.0, -1.0;
    QuantumSystem sys{CommutingSet(table), std::move(h), CVector(2)};
    sys.psi0 << 0.6, Complex(0.0, 0.8);
    sys.validate();
    return sys;
}

QuantumSystem qutrit() {
    Eigen::MatrixXd table(1, 3);
    table << 1.0, 0.0, -0.5;
    QuantumSystem sys{CommutingSet(table), std::nullopt, CVector(3)};
    sys.psi0 << 0.5, Complex(0.3, 0.4), 0.7;
    sys.validate();
    return sys;
}

CMatrix pauli_x() {
    CMatrix h(2, 2);
    h << 0, 1, 1, 0;
    return h;
}

CVector raw_final(const TrajectoryRecord& rec) {
    return rec.states.back() * std::exp(0.5 * rec.log_weights.back());
}

/// White-kind realization whose per-step value is a smooth drive at the step midpoint.
NoiseRealization smooth_drive(const TimeGrid& grid) {
    NoiseRealization n;
    n.kind = NoiseKind::White;
    n.dt = grid.dt();
    n.w.resize(1, static_cast<Eigen::Index>(grid.num_nodes()));
    for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
        const double t = grid.node(k) + 0.5 * grid.dt();
        n.w(0, static_cast<Eigen::Index>(k)) = 1.5 * std::sin(3.0 * t) + 0.4;
    }
    n.integrate();
    return n;
}

} // namespace

TEST(CslWhite, UnitaryWithoutNoise) {
    const QuantumSystem sys = qubit(pauli_x() * 0.7);
    const TimeGrid grid(0.0, 2.0, 1000);
    const NoiseRealization noise = NoiseSource::white(grid, 0.0).draw(1, 0);
    const TrajectoryRecord rec = evolve_csl_white(sys, grid, 0.0, noise, all_nodes(grid));
    for (double lw : rec.log_weights) {
        EXPECT_NEAR(lw, 0.0, 1e-10);
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(*sys.hamiltonian);
    CVector phases(2);
    for (int a = 0; a < 2; ++a) phases(a) = std::polar(1.0, -eig.eigenvalues()(a) * 2.0);
    const CVector exact = eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint() * sys.psi0;
    EXPECT_LT((rec.states.back() - exact).norm(), 1e-10);
}

TEST(CslWhite, RawWeightIsAMartingale) {
    EnsembleSpec spec{qubit(pauli_x() * 0.5), TimeGrid(0.0, 1.0, 100), CorrelationKernel::white(1.0), 10000, 11, 1,
                      {100}};
    const auto records = run_ensemble(spec);
    std::vector<double> w;
    for (const auto& r : records) w.push_back(std::exp(r.log_weights.back()));
    const MeanStderr ms = mean_stderr(w);
    EXPECT_LT(std::abs(ms.mean - 1.0), 5.0 * ms.sem) << ms.mean << " +- " << ms.sem;
}

TEST(CslWhite, RawOffDiagonalDecays) {
    const double gamma = 0.8;
    EnsembleSpec spec{qubit(), TimeGrid(0.0, 1.0, 100), CorrelationKernel::white(gamma), 20000, 5, 1, {25, 50, 100}};
    const auto records = run_ensemble(spec);
    const EnsembleDensity est = ensemble_to_density(records, EstimatorMode::Raw);
    const Complex rho01 = 0.6 * Complex(0.0, -0.8);
    for (std::size_t c = 0; c < est.times.size(); ++c) {
        const Complex expected = rho01 * std::exp(-2.0 * gamma * est.times[c]);
        const Complex got = est.mean[c](0, 1);
        EXPECT_LT(std::abs(got.real() - expected.real()), 5.0 * est.stderr_re[c](0, 1) + 1e-12);
        EXPECT_LT(std::abs(got.imag() - expected.imag()), 5.0 * est.stderr_im[c](0, 1) + 1e-12);
    }
}

TEST(ColoredCommuting, ZeroNoiseDecaysDeterministically) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.5, 150);
    const auto kernel = CorrelationKernel::gaussian(0.9, 0.2);
    NoiseRealization noise = NoiseSource::colored(grid, kernel).draw(3, 0);
    noise.w.setZero();
    noise.integrate();
    const TrajectoryRecord rec = evolve_colored_commuting(sys, grid, kernel, noise, {50, 150});
    for (std::size_t c = 0; c < rec.times.size(); ++c) {
        const double f = kernel.double_integral(rec.times[c], 0.0);
        const CVector raw = rec.states[c] * std::exp(0.5 * rec.log_weights[c]);
        for (Eigen::Index a = 0; a < 3; ++a) {
            const double a2 = std::pow(sys.operators.eigenvalue(0, static_cast<std::size_t>(a)), 2);
            const Complex expected = sys.psi0(a) * std::exp(-kernel.gamma() * a2 * f);
            EXPECT_LT(std::abs(raw(a) - expected), 1e-13);
        }
    }
}

TEST(ColoredCommuting, LogRatioLaw) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 2.0, 100);
    const auto kernel = CorrelationKernel::exponential(1.3, 0.4);
    const NoiseSource source = NoiseSource::colored(grid, kernel);
    for (std::uint64_t i = 0; i < 5; ++i) {
        const NoiseRealization noise = source.draw(17, i);
        const TrajectoryRecord rec = evolve_colored_commuting(sys, grid, kernel, noise, {20, 60, 100});
        for (std::size_t c = 0; c < rec.times.size(); ++c) {
            const double f = kernel.double_integral(rec.times[c], 0.0);
            const double x = rec.x[c](0);
            for (std::size_t a = 0; a < 3; ++a) {
                for (std::size_t b = a + 1; b < 3; ++b) {
                    const double aa = sys.operators.eigenvalue(0, a), ab = sys.operators.eigenvalue(0, b);
                    const double got = std::log(std::norm(rec.states[c](static_cast<Eigen::Index>(a))) /
                                                std::norm(rec.states[c](static_cast<Eigen::Index>(b))));
                    const double start = std::log(std::norm(sys.psi0(static_cast<Eigen::Index>(a))) /
                                                  std::norm(sys.psi0(static_cast<Eigen::Index>(b))));
                    const double expected =
                        start + 2.0 * (aa - ab) * x - 2.0 * kernel.gamma() * (aa * aa - ab * ab) * f;
                    EXPECT_NEAR(got, expected, 1e-10);
                }
            }
        }
    }
}

TEST(ColoredCommuting, WhiteKernelMatchesCsl) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.0, 200);
    const auto kernel = CorrelationKernel::white(1.1);
    const NoiseSource source = NoiseSource::white(grid, kernel.gamma());
    for (std::uint64_t i = 0; i < 10; ++i) {
        const NoiseRealization noise = source.draw(2, i);
        const auto a = evolve_colored_commuting(sys, grid, kernel, noise, {100, 200});
        const auto b = evolve_csl_white(sys, grid, kernel.gamma(), noise, {100, 200});
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_LT((a.states[c] - b.states[c]).norm(), 1e-6);
            EXPECT_NEAR(a.log_weights[c], b.log_weights[c], 1e-6);
        }
    }
}

TEST(ColoredCommuting, RejectsNonCommutingHamiltonian) {
    const QuantumSystem sys = qubit(pauli_x());
    const TimeGrid grid(0.0, 1.0, 10);
    const auto kernel = CorrelationKernel::gaussian(1.0, 0.1);
    const NoiseRealization noise = NoiseSource::colored(grid, kernel).draw(0, 0);
    try {
        evolve_colored_commuting(sys, grid, kernel, noise, {10});
        FAIL() << "expected NonCommuting";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonCommuting);
    }
}

TEST(ColoredCommuting, MatchesStepDoubledOde) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 2.0, 200);
    const auto kernel = CorrelationKernel::gaussian(1.0, 0.3);
    const NoiseRealization noise = NoiseSource::colored(grid, kernel).draw(9, 4);
    const TrajectoryRecord rec = evolve_colored_commuting(sys, grid, kernel, noise, {200});
    const CVector exact = raw_final(rec);

    // dc/dt = (a w(t) - 2 gamma a^2 G(t)) c with w linear between nodes.
    auto integrate = [&](int sub) {
        CVector c = sys.psi0;
        const double h = grid.dt() / sub;
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            const double w0 = noise.w(0, static_cast<Eigen::Index>(k));
            const double w1 = noise.w(0, static_cast<Eigen::Index>(k + 1));
            for (int s = 0; s < sub; ++s) {
                const double ta = grid.node(k) + s * h;
                auto rate = [&](double t) {
                    const double u = (t - grid.node(k)) / grid.dt();
                    const double w = (1.0 - u) * w0 + u * w1;
                    Eigen::VectorXd r(3);
                    for (Eigen::Index a = 0; a < 3; ++a) {
                        const double av = sys.operators.eigenvalue(0, static_cast<std::size_t>(a));
                        r(a) = av * w - 2.0 * kernel.gamma() * av * av * kernel.cumulative(t, 0.0);
                    }
                    return r;
                };
                const Eigen::VectorXd r1 = rate(ta), r2 = rate(ta + 0.5 * h), r3 = rate(ta + h);
                const CVector k1 = r1.cast<Complex>().cwiseProduct(c);
                const CVector k2 = r2.cast<Complex>().cwiseProduct(c + 0.5 * h * k1);
                const CVector k3 = r2.cast<Complex>().cwiseProduct(c + 0.5 * h * k2);
                const CVector k4 = r3.cast<Complex>().cwiseProduct(c + h * k3);
                c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        return c;
    };
    const CVector coarse = integrate(1);
    const CVector fine = integrate(2);
    const CVector extrapolated = (16.0 * fine - coarse) / 15.0;
    EXPECT_LT((fine - coarse).norm() / fine.norm(), 1e-6);
    EXPECT_LT((extrapolated - exact).norm() / exact.norm(), 1e-8);
}

TEST(RawLinear, GaussianKernelDriftsAboveOne) {
    Eigen::MatrixXd table(1, 2);
    table << 1.0, -1.0;
    QuantumSystem sys{CommutingSet(table), std::nullopt, CVector(2)};
    sys.psi0 << 1.0, 1.0;
    sys.validate();
    const auto kernel = CorrelationKernel::gaussian(1.0, 0.2);
    const TimeGrid grid(0.0, 1.0, 100);
    ASSERT_GE(kernel.gamma() * kernel.double_integral(1.0, 0.0), 0.5);
    EnsembleSpec spec{sys, grid, kernel, 4000, 21, 1, {100}, Proposal::Raw, SolverChoice::RawLinear};
    const auto records = run_ensemble(spec);
    std::vector<double> w;
    for (const auto& r : records) w.push_back(std::exp(r.log_weights.back()));
    const MeanStderr ms = mean_stderr(w);
    EXPECT_GT(ms.mean - 1.0, 5.0 * ms.sem) << ms.mean << " +- " << ms.sem;
}

TEST(RawLinear, CompensatedEqualsCslBitForBit) {
    const QuantumSystem sys = qubit(pauli_x() * 0.3);
    const TimeGrid grid(0.0, 1.0, 64);
    const NoiseRealization noise = NoiseSource::white(grid, 0.7).draw(8, 2);
    const auto a = evolve_raw_linear(sys, grid, noise, {32, 64}, 0.7);
    const auto b = evolve_csl_white(sys, grid, 0.7, noise, {32, 64});
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_EQ(a.log_weights[c], b.log_weights[c]);
        for (Eigen::Index i = 0; i < 2; ++i) {
            EXPECT_EQ(a.states[c](i), b.states[c](i));
        }
    }
}

TEST(Probe, InteriorColoredRichardson) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.0, 100);
    const auto kernel = CorrelationKernel::gaussian(1.0, 0.2);
    const ProbeSetup setup{sys, grid, kernel, NoiseSource::colored(grid, kernel).draw(4, 1),
                           ProbeSolver::ColoredCommuting};
    const ProbeResult r = richardson_probe(setup, 0.43, 0, 1e-3, 1e-4);
    EXPECT_FALSE(r.endpoint);
    EXPECT_LT(r.relative_error, 1e-4);
}

TEST(Probe, InteriorWhiteRichardson) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.0, 100);
    const auto kernel = CorrelationKernel::white(1.0);
    const ProbeSetup setup{sys, grid, kernel, NoiseSource::white(grid, 1.0).draw(4, 1), ProbeSolver::CslWhite};
    const ProbeResult r = richardson_probe(setup, 0.5, 0, 1e-3, 1e-4);
    EXPECT_LT(r.relative_error, 1e-4);
}

TEST(Probe, FutureTimeGivesZero) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.0, 100);
    const auto kernel = CorrelationKernel::gaussian(1.0, 0.2);
    const ProbeSetup setup{sys, grid, kernel, NoiseSource::colored(grid, kernel).draw(4, 1),
                           ProbeSolver::ColoredCommuting};
    const ProbeResult r = functional_derivative_probe(setup, 1.5, 0, 1e-3);
    EXPECT_EQ(r.estimate.norm(), 0.0);
    EXPECT_EQ(r.expected.norm(), 0.0);
}

TEST(Probe, WhiteEndpointCarriesHalf) {
    const QuantumSystem sys = qutrit();
    const TimeGrid grid(0.0, 1.0, 100);
    const auto kernel = CorrelationKernel::white(1.0);
    const ProbeSetup setup{sys, grid, kernel, NoiseSource::white(grid, 1.0).draw(4, 3), ProbeSolver::CslWhite};
    const ProbeResult r = richardson_probe(setup, 1.0, 0, 1e-3, 1e-4);
    EXPECT_TRUE(r.endpoint);
    const CVector half = 0.5 * sys.operators.matrix(0) * probe_final_state(setup, setup.noise);
    EXPECT_LT((r.expected - half).norm(), 1e-14);
    EXPECT_LT(r.relative_error, 1e-4);
}

TEST(CslWhite, StepHalvingSecondOrderForSmoothDrive) {
    const QuantumSystem sys = qubit(pauli_x());
    auto final_state = [&](std::size_t steps) {
        const TimeGrid grid(0.0, 1.0, steps);
        return raw_final(evolve_csl_white(sys, grid, 0.5, smooth_drive(grid), {steps}));
    };
    const CVector s1 = final_state(50), s2 = final_state(100), s3 = final_state(200);
    const double order = std::log2((s1 - s2).norm() / (s2 - s3).norm());
    EXPECT_GE(order, 1.8) << order;
}

TEST(Ensemble, GlobalPhaseIsAGauge) {
    QuantumSystem sys = qutrit();
    EnsembleSpec spec{sys, TimeGrid(0.0, 1.0, 50), CorrelationKernel::exponential(1.0, 0.3), 20, 3, 1, {25, 50}};
    const auto a = run_ensemble(spec);
    spec.system.psi0 *= std::polar(1.0, 1.234);
    const auto b = run_ensemble(spec);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_NEAR(a[i].log_weights[c], b[i].log_weights[c], 1e-12);
            EXPECT_LT((projector(a[i].states[c]) - projector(b[i].states[c])).norm(), 1e-12);
        }
    }
}

TEST(Ensemble, WorkerCountDoesNotChangeResults) {
    EnsembleSpec spec{qutrit(), TimeGrid(0.0, 1.0, 40), CorrelationKernel::gaussian(1.0, 0.1), 37, 99, 1, {20, 40},
                      Proposal::Tilted};
    const auto a = run_ensemble(spec);
    spec.workers = 4;
    const auto b = run_ensemble(spec);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].index, i);
        EXPECT_EQ(a[i].log_proposal_ratio, b[i].log_proposal_ratio);
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_EQ(a[i].log_weights[c], b[i].log_weights[c]);
            EXPECT_EQ(a[i].states[c], b[i].states[c]);
        }
    }
}

TEST(Ensemble, RejectsMismatchedNoise) {
    const QuantumSystem sys = qubit();
    const TimeGrid grid(0.0, 1.0, 10);
    const NoiseRealization noise = NoiseSource::white(grid, 1.0).draw(0, 0);
    EXPECT_THROW(evolve_colored_commuting(sys, grid, CorrelationKernel::gaussian(1.0, 0.1), noise, {10}), Error);
    EXPECT_THROW(evolve_csl_white(sys, TimeGrid(0.0, 1.0, 20), 1.0, noise, {20}), Error);
    EXPECT_THROW(evolve_csl_white(sys, grid, 1.0, noise, {5, 3}), Error);
}
