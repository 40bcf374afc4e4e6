#include "collapsim/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "collapsim/error.hpp"

namespace collapsim {

StateVector::StateVector(CVector amplitudes, double log_scale)
    : amplitudes_(std::move(amplitudes)), log_scale_(log_scale) {
    if (!amplitudes_.allFinite() || std::isnan(log_scale_)) {
        throw Error(ErrorCode::Validation, "state amplitudes must be finite");
    }
}

double StateVector::log_norm2() const {
    // Scale by the largest magnitude so the sum neither under- nor overflows.
    const double peak = amplitudes_.size() == 0 ? 0.0 : amplitudes_.cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    const double sum = (amplitudes_ / peak).squaredNorm();
    return 2.0 * log_scale_ + 2.0 * std::log(peak) + std::log(sum);
}

bool StateVector::is_normalized() const {
    return log_scale_ == 0.0 && std::abs(amplitudes_.squaredNorm() - 1.0) <= 1e-12;
}

CVector StateVector::dense() const {
    return amplitudes_ * std::exp(log_scale_);
}

void StateVector::rebalance() {
    const double ln2 = log_norm2();
    if (!std::isfinite(ln2)) {
        throw Error(ErrorCode::ZeroNorm, "state vector has zero norm");
    }
    const double local = ln2 - 2.0 * log_scale_;
    amplitudes_ *= std::exp(-0.5 * local);
    log_scale_ += 0.5 * local;
}

NormalizedState normalize(const StateVector& v) {
    NormalizedState out;
    out.log_weight = v.log_norm2();
    if (!std::isfinite(out.log_weight)) {
        throw Error(ErrorCode::ZeroNorm, "cannot normalize a zero vector");
    }
    const double local = out.log_weight - 2.0 * v.log_scale();
    CVector unit = v.amplitudes() * std::exp(-0.5 * local);
    unit /= unit.norm();
    out.state = StateVector(std::move(unit), 0.0);
    return out;
}

CommutingSet::CommutingSet(Eigen::MatrixXd table, std::vector<std::string> labels)
    : table_(std::move(table)), labels_(std::move(labels)) {
    if (table_.rows() < 1 || table_.cols() < 1) {
        throw Error(ErrorCode::Validation, "eigenvalue table must have at least one operator and one state");
    }
    if (!table_.allFinite()) {
        throw Error(ErrorCode::Validation, "eigenvalue table must be finite");
    }
    const std::size_t d = dimension();
    if (labels_.empty()) {
        for (std::size_t a = 0; a < d; ++a) {
            labels_.push_back(std::to_string(a));
        }
    } else if (labels_.size() != d) {
        throw Error(ErrorCode::Validation, "basis label count must equal the dimension");
    }
    group_of_.assign(d, 0);
    for (std::size_t a = 0; a < d; ++a) {
        std::vector<double> key(num_ops());
        for (std::size_t i = 0; i < num_ops(); ++i) {
            key[i] = eigenvalue(i, a);
        }
        auto it = std::find_if(groups_.begin(), groups_.end(),
                               [&](const OutcomeGroup& g) { return g.eigenvalues == key; });
        if (it == groups_.end()) {
            groups_.push_back(OutcomeGroup{key, {a}});
            group_of_[a] = groups_.size() - 1;
        } else {
            it->members.push_back(a);
            group_of_[a] = static_cast<std::size_t>(it - groups_.begin());
        }
    }
}

CMatrix CommutingSet::matrix(std::size_t op) const {
    CMatrix m = CMatrix::Zero(table_.cols(), table_.cols());
    for (Eigen::Index a = 0; a < table_.cols(); ++a) {
        m(a, a) = table_(static_cast<Eigen::Index>(op), a);
    }
    return m;
}

StateVector project(const StateVector& v, const CommutingSet& set, std::size_t op, double eigenvalue) {
    if (op >= set.num_ops() || v.dimension() != set.dimension()) {
        throw Error(ErrorCode::Validation, "projection operator or dimension mismatch");
    }
    CVector out = v.amplitudes();
    bool any = false;
    for (std::size_t a = 0; a < set.dimension(); ++a) {
        if (set.eigenvalue(op, a) == eigenvalue) {
            any = true;
        } else {
            out(static_cast<Eigen::Index>(a)) = 0.0;
        }
    }
    if (!any) {
        throw Error(ErrorCode::EmptyEigenmanifold, "no basis state has the requested eigenvalue");
    }
    return StateVector(std::move(out), v.log_scale());
}

StateVector project_group(const StateVector& v, const CommutingSet& set, std::size_t group) {
    if (group >= set.groups().size() || v.dimension() != set.dimension()) {
        throw Error(ErrorCode::EmptyEigenmanifold, "unknown eigenmanifold");
    }
    CVector out = CVector::Zero(v.amplitudes().size());
    for (std::size_t a : set.groups()[group].members) {
        out(static_cast<Eigen::Index>(a)) = v.amplitudes()(static_cast<Eigen::Index>(a));
    }
    return StateVector(std::move(out), v.log_scale());
}

double commutation_check(const CMatrix& hamiltonian, const CommutingSet& set) {
    const auto d = static_cast<Eigen::Index>(set.dimension());
    if (hamiltonian.rows() != d || hamiltonian.cols() != d) {
        throw Error(ErrorCode::Validation, "Hamiltonian shape does not match the eigenvalue table");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < set.num_ops(); ++i) {
        // (A H - H A)_{ab} = (a_a - a_b) H_ab for diagonal A.
        for (Eigen::Index a = 0; a < d; ++a) {
            for (Eigen::Index b = 0; b < d; ++b) {
                const double diff = set.eigenvalue(i, static_cast<std::size_t>(a)) -
                                    set.eigenvalue(i, static_cast<std::size_t>(b));
                worst = std::max(worst, std::abs(diff * hamiltonian(a, b)));
            }
        }
    }
    return worst;
}

void validate_hamiltonian(const CMatrix& hamiltonian, std::size_t dimension) {
    const auto d = static_cast<Eigen::Index>(dimension);
    if (hamiltonian.rows() != d || hamiltonian.cols() != d) {
        throw Error(ErrorCode::Validation, "Hamiltonian must be d x d");
    }
    if (!hamiltonian.allFinite()) {
        throw Error(ErrorCode::Validation, "Hamiltonian entries must be finite");
    }
    const double asym = (hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff();
    if (!(asym < 1e-12)) {
        throw Error(ErrorCode::Validation, "Hamiltonian is not Hermitian");
    }
}

DensityCheck check_density(const CMatrix& rho) {
    DensityCheck out;
    const double scale = std::max(1.0, rho.cwiseAbs().maxCoeff());
    out.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff() / scale;
    out.trace_error = std::abs(rho.trace() - Complex(1.0, 0.0));
    const CMatrix herm = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(herm, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = eig.eigenvalues().minCoeff();
    out.ok = out.hermiticity_error <= 1e-12 && out.trace_error <= 1e-10 && out.min_eigenvalue >= -1e-9;
    return out;
}

CMatrix projector(const CVector& psi) {
    return psi * psi.adjoint();
}

} // namespace collapsim
