// Finite-dimensional states and operators in the joint eigenbasis of the
// preferred-basis operators A_i (hbar = 1).
#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace collapsim {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// psi = exp(log_scale) * amplitudes. The offset keeps raw (unnormalized)
/// vectors representable when their norm under- or overflows a double.
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(CVector amplitudes, double log_scale = 0.0);

    const CVector& amplitudes() const noexcept { return amplitudes_; }
    CVector& amplitudes() noexcept { return amplitudes_; }
    double log_scale() const noexcept { return log_scale_; }
    void add_log_scale(double delta) noexcept { log_scale_ += delta; }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(amplitudes_.size()); }

    /// log ||psi||^2; -inf for the zero vector.
    double log_norm2() const;
    /// True when the offset is zero and ||amplitudes|| = 1 within 1e-12.
    bool is_normalized() const;
    /// Plain amplitudes exp(log_scale) * c; may under/overflow.
    CVector dense() const;

    /// Moves the magnitude of the amplitudes into the offset so that
    /// ||amplitudes|| = 1. Throws ZeroNorm for the zero vector.
    void rebalance();

private:
    CVector amplitudes_;
    double log_scale_ = 0.0;
};

struct NormalizedState {
    /// Unit vector with zero offset.
    StateVector state;
    /// log of the squared norm (the cooking weight).
    double log_weight = 0.0;

    double weight() const { return std::exp(log_weight); }
};

NormalizedState normalize(const StateVector& v);

/// One joint eigenmanifold: basis states sharing the same eigenvalue vector.
struct OutcomeGroup {
    std::vector<double> eigenvalues;
    std::vector<std::size_t> members;
};

/// Commuting operators A_1..A_m given by their eigenvalue table a(i, alpha).
class CommutingSet {
public:
    CommutingSet() = default;
    /// table: [m x d]
    explicit CommutingSet(Eigen::MatrixXd table, std::vector<std::string> labels = {});

    std::size_t num_ops() const noexcept { return static_cast<std::size_t>(table_.rows()); }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(table_.cols()); }
    const Eigen::MatrixXd& table() const noexcept { return table_; }
    double eigenvalue(std::size_t op, std::size_t basis) const {
        return table_(static_cast<Eigen::Index>(op), static_cast<Eigen::Index>(basis));
    }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    /// Dense diagonal matrix of operator i.
    CMatrix matrix(std::size_t op) const;

    /// Groups basis states by exact equality of (a_{1 alpha}, ..., a_{m alpha}),
    /// in order of first appearance.
    const std::vector<OutcomeGroup>& groups() const noexcept { return groups_; }
    /// Index into groups() of basis state alpha.
    std::size_t group_of(std::size_t basis) const { return group_of_[basis]; }

private:
    Eigen::MatrixXd table_;
    std::vector<std::string> labels_;
    std::vector<OutcomeGroup> groups_;
    std::vector<std::size_t> group_of_;
};

/// Zeroes amplitudes whose eigenvalue of operator `op` differs from `eigenvalue`.
/// Throws EmptyEigenmanifold when no basis state matches.
StateVector project(const StateVector& v, const CommutingSet& set, std::size_t op, double eigenvalue);
/// Projection onto a joint eigenmanifold.
StateVector project_group(const StateVector& v, const CommutingSet& set, std::size_t group);

/// max_i || A_i H - H A_i ||_max.
double commutation_check(const CMatrix& hamiltonian, const CommutingSet& set);

/// Throws Validation unless H is square and || H - H^dagger ||_max < 1e-12.
void validate_hamiltonian(const CMatrix& hamiltonian, std::size_t dimension);

/// Hermiticity (1e-12 relative), unit trace (1e-10) and eigenvalues >= -1e-9.
struct DensityCheck {
    double hermiticity_error = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
    bool ok = false;
};
DensityCheck check_density(const CMatrix& rho);

/// |psi><psi| for a normalized state.
CMatrix projector(const CVector& psi);

} // namespace collapsim
