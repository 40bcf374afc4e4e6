#include "collapsim/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/parallel.hpp"

namespace collapsim {

namespace {

std::size_t resolve_checkpoint(const TrajectoryRecord& record, std::size_t checkpoint) {
    if (record.num_checkpoints() == 0) {
        throw Error(ErrorCode::Validation, "trajectory record has no checkpoints");
    }
    if (checkpoint == kFinalCheckpoint) {
        return record.num_checkpoints() - 1;
    }
    if (checkpoint >= record.num_checkpoints()) {
        throw Error(ErrorCode::OutOfRange, "checkpoint index out of range");
    }
    return checkpoint;
}

CookedWeights from_log_weights(const std::vector<double>& log_w, double min_n_eff) {
    CookedWeights out;
    const std::size_t n = log_w.size();
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : log_w) {
        if (std::isnan(v)) {
            throw Error(ErrorCode::DegenerateEnsemble, "non-finite trajectory weight");
        }
        peak = std::max(peak, v);
    }
    if (!std::isfinite(peak)) {
        throw Error(ErrorCode::DegenerateEnsemble, "all trajectory weights vanish");
    }

    std::vector<double> unnormalized(n);
    std::vector<double> scaled(n);
    CompensatedSum sum;
    CompensatedSum sum_sq;
    for (std::size_t k = 0; k < n; ++k) {
        unnormalized[k] = std::exp(log_w[k]);
        scaled[k] = std::exp(log_w[k] - peak);
        sum.add(scaled[k]);
        sum_sq.add(scaled[k] * scaled[k]);
    }
    out.n_eff = sum.value() * sum.value() / sum_sq.value();
    if (out.n_eff < min_n_eff) {
        throw Error(ErrorCode::DegenerateEnsemble,
                    "effective sample size " + csv::format_double(out.n_eff) + " is below the minimum");
    }
    const double norm = static_cast<double>(n) / sum.value();
    out.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.weights[k] = scaled[k] * norm;
    }
    const MeanStderr ms = mean_stderr(unnormalized);
    out.raw_mean = ms.mean;
    out.raw_stderr = ms.sem;
    return out;
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda) {
    if (lambda < 0.2) {
        return 1.0;
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) {
            break;
        }
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

} // namespace

CookedWeights cook_weights(std::span<const TrajectoryRecord> records, std::size_t checkpoint, double min_n_eff) {
    if (records.empty()) {
        throw Error(ErrorCode::Validation, "at least one trajectory is required");
    }
    std::vector<double> log_w(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        const std::size_t c = resolve_checkpoint(records[k], checkpoint);
        log_w[k] = records[k].log_weights[c] + records[k].log_proposal_ratio;
    }
    return from_log_weights(log_w, min_n_eff);
}

CookedWeights raw_weights(std::span<const TrajectoryRecord> records) {
    if (records.empty()) {
        throw Error(ErrorCode::Validation, "at least one trajectory is required");
    }
    std::vector<double> log_w(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        log_w[k] = records[k].log_proposal_ratio;
    }
    return from_log_weights(log_w, 1.0);
}

std::vector<double> group_fractions(const CVector& state, const CommutingSet& set) {
    if (static_cast<std::size_t>(state.size()) != set.dimension()) {
        throw Error(ErrorCode::Validation, "state dimension does not match the eigenvalue table");
    }
    std::vector<double> out(set.groups().size(), 0.0);
    const double total = state.squaredNorm();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::ZeroNorm, "state has zero norm");
    }
    for (std::size_t a = 0; a < set.dimension(); ++a) {
        out[set.group_of(a)] += std::norm(state(static_cast<Eigen::Index>(a))) / total;
    }
    return out;
}

std::optional<std::size_t> classify_outcome(const TrajectoryRecord& record, const CommutingSet& set,
                                            double threshold, std::size_t checkpoint) {
    if (!(threshold >= 0.5 && threshold <= 1.0)) {
        throw Error(ErrorCode::Validation, "decision threshold must lie in [0.5, 1]");
    }
    const std::size_t c = resolve_checkpoint(record, checkpoint);
    const std::vector<double> fractions = group_fractions(record.states[c], set);
    const auto best = std::max_element(fractions.begin(), fractions.end());
    // At R = 0.5 a tie is undecided; above it the largest group is the only candidate.
    if (*best >= threshold && (threshold > 0.5 || *best > 0.5)) {
        return static_cast<std::size_t>(best - fractions.begin());
    }
    return std::nullopt;
}

std::vector<double> born_weights(const CVector& psi0, const CommutingSet& set) {
    return group_fractions(psi0, set);
}

BornReport born_frequencies(std::span<const TrajectoryRecord> records, const CookedWeights& weights,
                            const CommutingSet& set, const CVector& psi0, double threshold, double min_decided,
                            std::size_t checkpoint) {
    if (weights.weights.size() != records.size()) {
        throw Error(ErrorCode::Validation, "weight count does not match the record count");
    }
    BornReport out;
    out.n_eff = weights.n_eff;
    const std::size_t groups = set.groups().size();
    std::vector<CompensatedSum> per_group(groups);
    CompensatedSum decided;
    CompensatedSum total;
    out.labels.reserve(records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto label = classify_outcome(records[k], set, threshold, checkpoint);
        out.labels.push_back(label);
        total.add(weights.weights[k]);
        if (label) {
            per_group[*label].add(weights.weights[k]);
            decided.add(weights.weights[k]);
        }
    }
    out.undecided_fraction = 1.0 - decided.value() / total.value();
    if (1.0 - out.undecided_fraction < min_decided) {
        throw Error(ErrorCode::TooManyUndecided,
                    "undecided fraction " + csv::format_double(out.undecided_fraction) + " exceeds the limit");
    }
    const std::vector<double> born = born_weights(psi0, set);
    for (std::size_t g = 0; g < groups; ++g) {
        OutcomeStat s;
        s.group = g;
        s.eigenvalues = set.groups()[g].eigenvalues;
        s.born_weight = born[g];
        s.frequency = decided.value() > 0.0 ? per_group[g].value() / decided.value() : 0.0;
        s.stderr_ = std::sqrt(s.frequency * (1.0 - s.frequency) / out.n_eff);
        out.outcomes.push_back(std::move(s));
    }
    return out;
}

void write_statistics_csv(const std::filesystem::path& path, const BornReport& report) {
    csv::Writer out(path, {"outcome", "born_weight", "cooked_frequency", "stderr", "n_eff", "undecided_fraction"});
    for (const auto& s : report.outcomes) {
        out.field(s.group).field(s.born_weight).field(s.frequency).field(s.stderr_);
        out.field(report.n_eff).field(report.undecided_fraction);
        out.end_row();
    }
}

double GaussianMixture::pdf(double x) const {
    const double norm = 1.0 / std::sqrt(2.0 * M_PI * variance);
    double out = 0.0;
    for (const auto& c : components) {
        const double u = x - c.mean;
        out += c.weight * norm * std::exp(-0.5 * u * u / variance);
    }
    return out;
}

double GaussianMixture::cdf(double x) const {
    const double sd = std::sqrt(variance);
    double out = 0.0;
    for (const auto& c : components) {
        out += c.weight * normal_cdf((x - c.mean) / sd);
    }
    return out;
}

GaussianMixture cooked_mixture(const CVector& psi0, const CommutingSet& set, std::size_t op, double gamma_f) {
    if (op >= set.num_ops()) {
        throw Error(ErrorCode::Validation, "operator index out of range");
    }
    if (!(gamma_f > 0.0)) {
        throw Error(ErrorCode::Validation, "gamma f must be positive");
    }
    if (static_cast<std::size_t>(psi0.size()) != set.dimension()) {
        throw Error(ErrorCode::Validation, "state dimension does not match the eigenvalue table");
    }
    GaussianMixture out;
    out.variance = gamma_f;
    const double total = psi0.squaredNorm();
    std::vector<double> values;
    for (std::size_t a = 0; a < set.dimension(); ++a) {
        const double p = std::norm(psi0(static_cast<Eigen::Index>(a))) / total;
        const double value = set.eigenvalue(op, a);
        auto it = std::find(values.begin(), values.end(), value);
        if (it == values.end()) {
            values.push_back(value);
            out.components.push_back({p, 2.0 * value * gamma_f});
        } else {
            out.components[static_cast<std::size_t>(it - values.begin())].weight += p;
        }
    }
    std::erase_if(out.components, [](const MixtureComponent& c) { return c.weight == 0.0; });
    return out;
}

XDistribution x_distribution(std::span<const TrajectoryRecord> records, std::span<const double> weights,
                             const GaussianMixture& model, std::size_t op, std::size_t checkpoint, std::size_t bins,
                             double significance) {
    const std::size_t n = records.size();
    if (n == 0 || weights.size() != n) {
        throw Error(ErrorCode::Validation, "records and weights must be non-empty and of equal length");
    }
    if (bins == 0) {
        throw Error(ErrorCode::Validation, "histogram needs at least one bin");
    }
    std::vector<double> xs(n);
    CompensatedSum w_sum;
    CompensatedSum w_sq;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t c = resolve_checkpoint(records[k], checkpoint);
        if (op >= static_cast<std::size_t>(records[k].x[c].size())) {
            throw Error(ErrorCode::Validation, "operator index out of range");
        }
        xs[k] = records[k].x[c](static_cast<Eigen::Index>(op));
        w_sum.add(weights[k]);
        w_sq.add(weights[k] * weights[k]);
    }
    const double total = w_sum.value();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::DegenerateEnsemble, "weights sum to zero");
    }

    XDistribution out;
    out.model = model;
    out.n_eff = total * total / w_sq.value();

    // Weighted ECDF against the model CDF, checked on both sides of each jump.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    CompensatedSum running;
    double distance = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t k = order[r];
        const double before = running.value() / total;
        running.add(weights[k]);
        const double after = running.value() / total;
        const double model_cdf = model.cdf(xs[k]);
        distance = std::max({distance, std::abs(model_cdf - before), std::abs(after - model_cdf)});
    }
    out.ks_distance = distance;
    out.ks_critical = ks_critical_value(out.n_eff, significance);

    const double lo = xs[order.front()];
    const double hi = xs[order.back()];
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    out.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
        out.bin_edges[b] = b == bins ? (hi > lo ? hi : lo + 1.0) : lo + static_cast<double>(b) * width;
    }
    out.density.assign(bins, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        auto b = static_cast<std::size_t>((xs[k] - lo) / width);
        b = std::min(b, bins - 1);
        out.density[b] += weights[k];
    }
    out.model_density.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out.density[b] /= total * width;
        out.model_density[b] = model.pdf(0.5 * (out.bin_edges[b] + out.bin_edges[b + 1]));
    }
    return out;
}

XDistribution cooked_x_distribution(std::span<const TrajectoryRecord> records, const CookedWeights& weights,
                                    const CVector& psi0, const CommutingSet& set, double gamma_f, std::size_t op,
                                    std::size_t checkpoint, std::size_t bins) {
    return x_distribution(records, weights.weights, cooked_mixture(psi0, set, op, gamma_f), op, checkpoint, bins);
}

XDistribution raw_x_distribution(std::span<const TrajectoryRecord> records, double gamma_f, std::size_t op,
                                 std::size_t checkpoint, std::size_t bins) {
    if (!(gamma_f > 0.0)) {
        throw Error(ErrorCode::Validation, "gamma f must be positive");
    }
    GaussianMixture model;
    model.variance = gamma_f;
    model.components.push_back({1.0, 0.0});
    return x_distribution(records, raw_weights(records).weights, model, op, checkpoint, bins);
}

double ks_critical_value(double n, double significance) {
    if (!(n > 0.0) || !(significance > 0.0 && significance < 1.0)) {
        throw Error(ErrorCode::Validation, "KS critical value needs n > 0 and 0 < significance < 1");
    }
    double lo = 0.2;
    double hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (kolmogorov_q(mid) > significance) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double lambda = 0.5 * (lo + hi);
    const double root = std::sqrt(n);
    return lambda / (root + 0.12 + 0.11 / root);
}

double separation_ratio(double gamma_f, double eigenvalue_gap) {
    if (!(gamma_f > 0.0) || eigenvalue_gap == 0.0) {
        throw Error(ErrorCode::Validation, "separation ratio needs gamma f > 0 and a nonzero gap");
    }
    return std::sqrt(gamma_f) / (2.0 * std::abs(eigenvalue_gap) * gamma_f);
}

} // namespace collapsim
