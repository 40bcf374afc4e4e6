// Cooked statistics of raw trajectories: importance weights, outcome
// classification, outcome frequencies and the cooked distribution of x(t).
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "collapsim/dynamics.hpp"
#include "collapsim/hilbert.hpp"

namespace collapsim {

/// Marker for "use the last checkpoint".
inline constexpr std::size_t kFinalCheckpoint = static_cast<std::size_t>(-1);

struct CookedWeights {
    /// r_k ||psi_raw(t)||^2 rescaled to mean 1 (r_k the proposal ratio).
    std::vector<double> weights;
    double n_eff = 0.0;
    /// Mean and standard error of the unnormalized weights r_k ||psi_raw||^2.
    double raw_mean = 0.0;
    double raw_stderr = 0.0;
};

/// Throws DegenerateEnsemble when n_eff < min_n_eff.
CookedWeights cook_weights(std::span<const TrajectoryRecord> records, std::size_t checkpoint = kFinalCheckpoint,
                           double min_n_eff = 10.0);

/// Proposal ratios r_k alone, rescaled to mean 1: the raw path measure.
CookedWeights raw_weights(std::span<const TrajectoryRecord> records);

/// Fraction of ||psi_phys||^2 in each joint eigenmanifold.
std::vector<double> group_fractions(const CVector& state, const CommutingSet& set);

/// Index of the group holding at least `threshold` of the state, or nullopt (undecided).
std::optional<std::size_t> classify_outcome(const TrajectoryRecord& record, const CommutingSet& set,
                                            double threshold = 0.99, std::size_t checkpoint = kFinalCheckpoint);

struct OutcomeStat {
    std::size_t group = 0;
    std::vector<double> eigenvalues;
    /// ||P psi0||^2
    double born_weight = 0.0;
    /// Weighted frequency among decided trajectories.
    double frequency = 0.0;
    /// sqrt(p (1 - p) / n_eff)
    double stderr_ = 0.0;
};

struct BornReport {
    std::vector<OutcomeStat> outcomes;
    double n_eff = 0.0;
    /// Weighted fraction of undecided trajectories.
    double undecided_fraction = 0.0;
    std::vector<std::optional<std::size_t>> labels;
};

/// Born weights ||P_g psi0||^2 per joint eigenmanifold.
std::vector<double> born_weights(const CVector& psi0, const CommutingSet& set);

/// Throws TooManyUndecided when the weighted decided fraction is below min_decided.
BornReport born_frequencies(std::span<const TrajectoryRecord> records, const CookedWeights& weights,
                            const CommutingSet& set, const CVector& psi0, double threshold = 0.99,
                            double min_decided = 0.95, std::size_t checkpoint = kFinalCheckpoint);

/// Statistics CSV (outcome, born_weight, cooked_frequency, stderr, n_eff, undecided_fraction).
void write_statistics_csv(const std::filesystem::path& path, const BornReport& report);

struct MixtureComponent {
    double weight = 0.0;
    double mean = 0.0;
};

/// Gaussian mixture with a common variance.
struct GaussianMixture {
    std::vector<MixtureComponent> components;
    double variance = 0.0;

    double pdf(double x) const;
    double cdf(double x) const;
};

/// Cooked law of x_op(t): components at 2 a gamma f with weights ||P_a psi0||^2
/// (equal eigenvalues of `op` merged), common variance gamma f.
GaussianMixture cooked_mixture(const CVector& psi0, const CommutingSet& set, std::size_t op, double gamma_f);

struct XDistribution {
    std::vector<double> bin_edges;
    /// Weighted histogram normalized as a density.
    std::vector<double> density;
    /// Model density at the bin centres.
    std::vector<double> model_density;
    GaussianMixture model;
    double n_eff = 0.0;
    /// sup |F_weighted - F_model|
    double ks_distance = 0.0;
    /// 1% critical value for n_eff.
    double ks_critical = 0.0;
    bool passes() const noexcept { return ks_distance < ks_critical; }
};

/// Weighted x_op distribution at a checkpoint compared with `model`.
XDistribution x_distribution(std::span<const TrajectoryRecord> records, std::span<const double> weights,
                             const GaussianMixture& model, std::size_t op = 0,
                             std::size_t checkpoint = kFinalCheckpoint, std::size_t bins = 60,
                             double significance = 0.01);

/// Cooked x(t) against cooked_mixture.
XDistribution cooked_x_distribution(std::span<const TrajectoryRecord> records, const CookedWeights& weights,
                                    const CVector& psi0, const CommutingSet& set, double gamma_f, std::size_t op = 0,
                                    std::size_t checkpoint = kFinalCheckpoint, std::size_t bins = 60);

/// Raw x(t) (proposal-ratio weighted) against N(0, gamma f).
XDistribution raw_x_distribution(std::span<const TrajectoryRecord> records, double gamma_f, std::size_t op = 0,
                                 std::size_t checkpoint = kFinalCheckpoint, std::size_t bins = 60);

/// Kolmogorov limiting-distribution critical value with the Stephens
/// finite-sample correction: lambda_a / (sqrt(n) + 0.12 + 0.11 / sqrt(n)).
double ks_critical_value(double n, double significance = 0.01);

/// Ratio of component spread to component separation, sqrt(gamma f) / (2 |da| gamma f).
double separation_ratio(double gamma_f, double eigenvalue_gap);

} // namespace collapsim
