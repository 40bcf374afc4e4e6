#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "collapsim/cli.hpp"
#include "collapsim/error.hpp"

namespace collapsim::cli {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::Validation, where + ": " + what);
}

// Object view that records which keys were read and rejects the rest.
class Section {
public:
    Section(const json& value, std::string where) : value_(value), where_(std::move(where)) {
        if (!value_.is_object()) {
            invalid(where_, "expected an object");
        }
    }

    void allow(std::initializer_list<std::string_view> keys) {
        for (auto k : keys) {
            allowed_.emplace(k);
        }
        for (const auto& item : value_.items()) {
            if (!allowed_.contains(item.key())) {
                invalid(where_, "unknown key '" + item.key() + "'");
            }
        }
    }

    bool has(const std::string& key) const { return value_.contains(key); }
    const json& at(const std::string& key) const {
        if (!value_.contains(key)) {
            invalid(where_, "missing key '" + key + "'");
        }
        return value_.at(key);
    }
    std::string path(const std::string& key) const { return where_ + "." + key; }

    double number(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_number()) {
            invalid(path(key), "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            invalid(path(key), "expected a finite number");
        }
        return d;
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t unsigned_integer(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            invalid(path(key), "expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? unsigned_integer(key) : fallback;
    }

    std::string string(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_string()) {
            invalid(path(key), "expected a string");
        }
        return v.get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = at(key);
        if (!v.is_boolean()) {
            invalid(path(key), "expected true or false");
        }
        return v.get<bool>();
    }

    Section child(const std::string& key) const { return Section(at(key), path(key)); }

private:
    const json& value_;
    std::string where_;
    std::set<std::string, std::less<>> allowed_;
};

Complex parse_complex(const json& v, const std::string& where) {
    if (v.is_number()) {
        return {v.get<double>(), 0.0};
    }
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        return {v[0].get<double>(), v[1].get<double>()};
    }
    invalid(where, "expected a number or a [re, im] pair");
}

std::vector<double> parse_number_list(const json& v, const std::string& where) {
    if (!v.is_array()) {
        invalid(where, "expected an array of numbers");
    }
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) {
            invalid(where, "expected an array of numbers");
        }
        out.push_back(e.get<double>());
    }
    return out;
}

Task parse_task(const std::string& name) {
    if (name == "trajectories") return Task::Trajectories;
    if (name == "master") return Task::Master;
    if (name == "fn-check") return Task::FnCheck;
    if (name == "macro-rate") return Task::MacroRate;
    if (name == "kernel-diag") return Task::KernelDiag;
    invalid("task", "unknown task '" + name + "'");
}

SystemConfig parse_system(const Section& s) {
    SystemConfig out;
    const json& table = s.at("eigenvalues");
    if (!table.is_array() || table.empty()) {
        invalid(s.path("eigenvalues"), "expected a non-empty array");
    }
    std::vector<std::vector<double>> rows;
    if (table.front().is_array()) {
        for (const auto& row : table) {
            rows.push_back(parse_number_list(row, s.path("eigenvalues")));
        }
    } else {
        rows.push_back(parse_number_list(table, s.path("eigenvalues")));
    }
    const std::size_t d = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != d || d == 0) {
            invalid(s.path("eigenvalues"), "rows must be non-empty and of equal length");
        }
    }
    if (s.has("d") && s.unsigned_integer("d") != d) {
        invalid(s.path("d"), "does not match the eigenvalue table");
    }
    out.eigenvalues.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            out.eigenvalues(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = rows[i][a];
        }
    }

    const json& psi = s.at("psi0");
    if (!psi.is_array() || psi.size() != d) {
        invalid(s.path("psi0"), "expected d amplitudes");
    }
    out.psi0.resize(static_cast<Eigen::Index>(d));
    for (std::size_t a = 0; a < d; ++a) {
        out.psi0(static_cast<Eigen::Index>(a)) = parse_complex(psi[a], s.path("psi0"));
    }

    if (s.has("hamiltonian")) {
        const json& h = s.at("hamiltonian");
        if (!h.is_array() || h.size() != d) {
            invalid(s.path("hamiltonian"), "expected a d x d matrix");
        }
        CMatrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t a = 0; a < d; ++a) {
            if (!h[a].is_array() || h[a].size() != d) {
                invalid(s.path("hamiltonian"), "expected a d x d matrix");
            }
            for (std::size_t b = 0; b < d; ++b) {
                m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    parse_complex(h[a][b], s.path("hamiltonian"));
            }
        }
        out.hamiltonian = std::move(m);
    }

    if (s.has("labels")) {
        const json& labels = s.at("labels");
        if (!labels.is_array() || labels.size() != d) {
            invalid(s.path("labels"), "expected d strings");
        }
        for (const auto& l : labels) {
            if (!l.is_string()) {
                invalid(s.path("labels"), "expected d strings");
            }
            out.labels.push_back(l.get<std::string>());
        }
    }
    return out;
}

KernelConfig parse_kernel(const Section& s, const std::filesystem::path& base_dir) {
    KernelConfig out;
    try {
        out.family = parse_kernel_family(s.string("family"));
    } catch (const Error& e) {
        invalid(s.path("family"), e.what());
    }
    out.gamma = s.number("gamma");
    if (out.family == KernelFamily::Gaussian || out.family == KernelFamily::Exponential) {
        out.tau = s.number("tau");
    } else if (s.has("tau")) {
        invalid(s.path("tau"), "only Gaussian and Exponential kernels take tau");
    }
    if (out.family == KernelFamily::Tabulated) {
        out.table = s.string("table");
        if (out.table.is_relative()) {
            out.table = base_dir / out.table;
        }
    } else if (s.has("table")) {
        invalid(s.path("table"), "only tabulated kernels take a table");
    }
    return out;
}

GridConfig parse_grid(const Section& s) {
    GridConfig out;
    out.t0 = s.number("t0", 0.0);
    out.t1 = s.number("t1");
    out.steps = s.unsigned_integer("steps");
    if (!(out.t1 > out.t0) || out.steps < 1) {
        invalid("grid", "needs t1 > t0 and steps >= 1");
    }
    return out;
}

EnsembleConfig parse_ensemble(const Section& s) {
    EnsembleConfig out;
    out.n = s.unsigned_integer("n", out.n);
    if (out.n < 1) {
        invalid(s.path("n"), "must be at least 1");
    }
    out.master_seed = s.unsigned_integer("master_seed", 0);
    out.workers = static_cast<unsigned>(s.unsigned_integer("workers", 1));
    if (s.has("checkpoints")) {
        const json& c = s.at("checkpoints");
        if (c.is_number_unsigned() || c.is_number_integer()) {
            const auto count = s.unsigned_integer("checkpoints");
            if (count < 1) {
                invalid(s.path("checkpoints"), "count must be at least 1");
            }
            out.checkpoints = static_cast<std::size_t>(count);
        } else {
            out.checkpoints = parse_number_list(c, s.path("checkpoints"));
        }
    }
    if (s.has("proposal")) {
        const std::string p = s.string("proposal");
        if (p == "raw") {
            out.proposal = Proposal::Raw;
        } else if (p == "tilted") {
            out.proposal = Proposal::Tilted;
        } else {
            invalid(s.path("proposal"), "expected 'raw' or 'tilted'");
        }
    }
    if (s.has("solver")) {
        const std::string v = s.string("solver");
        if (v == "auto") {
            out.solver = SolverChoice::Auto;
        } else if (v == "raw-linear") {
            out.solver = SolverChoice::RawLinear;
        } else {
            invalid(s.path("solver"), "expected 'auto' or 'raw-linear'");
        }
    }
    out.threshold = s.number("threshold", out.threshold);
    if (!(out.threshold >= 0.5 && out.threshold <= 1.0)) {
        invalid(s.path("threshold"), "must lie in [0.5, 1]");
    }
    out.min_decided = s.number("min_decided", out.min_decided);
    if (!(out.min_decided >= 0.0 && out.min_decided <= 1.0)) {
        invalid(s.path("min_decided"), "must lie in [0, 1]");
    }
    out.statistics = s.boolean("statistics", out.statistics);
    out.dump_paths = s.boolean("dump_paths", out.dump_paths);
    out.batches = s.unsigned_integer("batches", out.batches);
    if (out.batches < 2) {
        invalid(s.path("batches"), "must be at least 2");
    }
    return out;
}

MacroConfig parse_macro(const Section& s, const std::filesystem::path& base_dir) {
    MacroConfig out;
    out.params.alpha = s.number("alpha", out.params.alpha);
    out.params.lambda = s.number("lambda", out.params.lambda);
    out.params.beta = s.number("beta", 0.0);
    out.params.t0 = s.number("t0", 0.0);
    out.params.validate();

    const json& body = s.at("body");
    if (body.is_string()) {
        out.body.file = body.get<std::string>();
        if (out.body.file.is_relative()) {
            out.body.file = base_dir / out.body.file;
        }
    } else {
        Section b = s.child("body");
        b.allow({"lattice_count", "lattice_spacing"});
        out.body.lattice_count = b.unsigned_integer("lattice_count");
        out.body.lattice_spacing = b.number("lattice_spacing");
        if (out.body.lattice_count < 1 || !(out.body.lattice_spacing > 0.0)) {
            invalid(s.path("body"), "lattice needs a positive count and spacing");
        }
    }
    out.separations = parse_number_list(s.at("separations"), s.path("separations"));
    if (out.separations.empty()) {
        invalid(s.path("separations"), "expected at least one separation");
    }
    return out;
}

} // namespace

std::string_view to_string(Task task) noexcept {
    switch (task) {
    case Task::Trajectories: return "trajectories";
    case Task::Master: return "master";
    case Task::FnCheck: return "fn-check";
    case Task::MacroRate: return "macro-rate";
    case Task::KernelDiag: return "kernel-diag";
    }
    return "unknown";
}

std::uint64_t fnv1a(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        invalid("config", std::string("malformed JSON: ") + e.what());
    }
    Section root(doc, "config");
    root.allow({"task", "output", "system", "kernel", "grid", "ensemble", "fn_check", "macro", "kernel_diag"});

    RunConfig out;
    out.task = parse_task(root.string("task"));
    if (root.has("output")) {
        out.output = root.string("output");
    }

    if (root.has("system")) {
        Section s = root.child("system");
        s.allow({"d", "eigenvalues", "psi0", "hamiltonian", "labels"});
        out.system = parse_system(s);
    }
    if (root.has("kernel")) {
        Section s = root.child("kernel");
        s.allow({"family", "gamma", "tau", "table"});
        out.kernel = parse_kernel(s, base_dir);
    }
    if (root.has("grid")) {
        Section s = root.child("grid");
        s.allow({"t0", "t1", "steps"});
        out.grid = parse_grid(s);
    }
    if (root.has("ensemble")) {
        Section s = root.child("ensemble");
        s.allow({"n", "master_seed", "workers", "checkpoints", "proposal", "solver", "threshold", "min_decided",
                 "statistics", "dump_paths", "batches"});
        out.ensemble = parse_ensemble(s);
    }
    if (root.has("fn_check")) {
        Section s = root.child("fn_check");
        s.allow({"functionals"});
        const json& list = s.at("functionals");
        if (!list.is_array() || list.empty()) {
            invalid(s.path("functionals"), "expected a non-empty array of names");
        }
        out.fn_check.functionals.clear();
        for (const auto& f : list) {
            if (!f.is_string()) {
                invalid(s.path("functionals"), "expected a non-empty array of names");
            }
            try {
                out.fn_check.functionals.push_back(parse_functional(f.get<std::string>()));
            } catch (const Error& e) {
                invalid(s.path("functionals"), e.what());
            }
        }
    }
    if (root.has("macro")) {
        Section s = root.child("macro");
        s.allow({"alpha", "lambda", "beta", "t0", "body", "separations"});
        out.macro = parse_macro(s, base_dir);
    }
    if (root.has("kernel_diag")) {
        Section s = root.child("kernel_diag");
        s.allow({"times", "t0", "horizon"});
        out.kernel_diag.times = parse_number_list(s.at("times"), s.path("times"));
        out.kernel_diag.t0 = s.number("t0", 0.0);
        out.kernel_diag.horizon = s.number("horizon", 0.0);
        if (out.kernel_diag.times.empty()) {
            invalid(s.path("times"), "expected at least one time");
        }
    }

    auto require = [&](bool present, const char* block) {
        if (!present) {
            invalid("config", std::string("task '") + std::string(to_string(out.task)) + "' needs a '" + block +
                                  "' block");
        }
    };
    switch (out.task) {
    case Task::Trajectories:
    case Task::Master:
        require(out.system.has_value(), "system");
        require(out.kernel.has_value(), "kernel");
        require(out.grid.has_value(), "grid");
        break;
    case Task::FnCheck:
        require(out.kernel.has_value(), "kernel");
        require(out.grid.has_value(), "grid");
        break;
    case Task::MacroRate:
        require(out.macro.has_value(), "macro");
        require(out.grid.has_value(), "grid");
        break;
    case Task::KernelDiag:
        require(out.kernel.has_value(), "kernel");
        require(root.has("kernel_diag"), "kernel_diag");
        break;
    }
    if (out.task == Task::FnCheck && out.ensemble.n < 2) {
        invalid("ensemble.n", "fn-check needs at least two samples");
    }

    // Canonical form for hashing: sorted keys, worker count and output excluded.
    json canonical = doc;
    canonical.erase("output");
    if (canonical.contains("ensemble") && canonical["ensemble"].is_object()) {
        canonical["ensemble"].erase("workers");
    }
    out.canonical = canonical.dump();
    return out;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read config " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path());
}

CorrelationKernel make_kernel(const KernelConfig& config) {
    switch (config.family) {
    case KernelFamily::White: return CorrelationKernel::white(config.gamma);
    case KernelFamily::Gaussian: return CorrelationKernel::gaussian(config.gamma, config.tau);
    case KernelFamily::Exponential: return CorrelationKernel::exponential(config.gamma, config.tau);
    case KernelFamily::Tabulated: return CorrelationKernel::tabulated_from_csv(config.gamma, config.table);
    }
    throw Error(ErrorCode::Validation, "unknown kernel family");
}

QuantumSystem make_system(const SystemConfig& config) {
    QuantumSystem system{CommutingSet(config.eigenvalues, config.labels), config.hamiltonian, config.psi0};
    system.validate();
    return system;
}

Checkpoints make_checkpoints(const EnsembleConfig& config, const TimeGrid& grid) {
    if (const auto* count = std::get_if<std::size_t>(&config.checkpoints)) {
        return evenly_spaced(grid, *count);
    }
    Checkpoints out;
    for (double t : std::get<std::vector<double>>(config.checkpoints)) {
        out.push_back(grid.nearest_node(t));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) {
        throw Error(ErrorCode::Validation, "at least one checkpoint is required");
    }
    return out;
}

} // namespace collapsim::cli
