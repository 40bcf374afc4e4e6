// Configuration-driven experiments: one JSON config describes one run.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "collapsim/dynamics.hpp"
#include "collapsim/fncheck.hpp"
#include "collapsim/hilbert.hpp"
#include "collapsim/kernels.hpp"
#include "collapsim/macrobody.hpp"

namespace collapsim::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Task { Trajectories, Master, FnCheck, MacroRate, KernelDiag };

std::string_view to_string(Task task) noexcept;

struct SystemConfig {
    Eigen::MatrixXd eigenvalues;
    std::vector<std::string> labels;
    std::optional<CMatrix> hamiltonian;
    CVector psi0;
};

struct KernelConfig {
    KernelFamily family = KernelFamily::White;
    double gamma = 1.0;
    double tau = 0.0;
    std::filesystem::path table;
};

struct GridConfig {
    double t0 = 0.0;
    double t1 = 1.0;
    std::size_t steps = 100;
};

struct EnsembleConfig {
    std::size_t n = 1000;
    std::uint64_t master_seed = 0;
    unsigned workers = 1;
    /// Either a count of evenly spaced checkpoints or explicit times.
    std::variant<std::size_t, std::vector<double>> checkpoints = std::size_t{50};
    Proposal proposal = Proposal::Raw;
    SolverChoice solver = SolverChoice::Auto;
    double threshold = 0.99;
    double min_decided = 0.95;
    bool statistics = true;
    bool dump_paths = false;
    std::size_t batches = 100;
};

struct FnCheckConfig {
    std::vector<Functional> functionals{Functional::Constant, Functional::LinearX, Functional::ExpX};
};

struct BodyConfig {
    std::filesystem::path file;
    std::size_t lattice_count = 1;
    double lattice_spacing = 0.0;
};

struct MacroConfig {
    MacroParams params;
    BodyConfig body;
    std::vector<double> separations;
};

struct KernelDiagConfig {
    std::vector<double> times;
    double t0 = 0.0;
    double horizon = 0.0;
};

struct RunConfig {
    Task task = Task::KernelDiag;
    std::optional<std::string> output;
    std::optional<SystemConfig> system;
    std::optional<KernelConfig> kernel;
    std::optional<GridConfig> grid;
    EnsembleConfig ensemble;
    FnCheckConfig fn_check;
    std::optional<MacroConfig> macro;
    KernelDiagConfig kernel_diag;
    /// Canonical serialization used for the manifest hash.
    std::string canonical;
};

/// Parses and validates a config document; unknown keys, wrong types and
/// missing task blocks raise Validation errors. Relative table/body paths are
/// resolved against base_dir.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

CorrelationKernel make_kernel(const KernelConfig& config);
QuantumSystem make_system(const SystemConfig& config);
Checkpoints make_checkpoints(const EnsembleConfig& config, const TimeGrid& grid);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data) noexcept;

struct RunOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
};

/// Resolves the output directory: --out, then the config's "output", then
/// $COLLAPSIM_OUT, then ./collapsim_out.
std::filesystem::path resolve_output(const RunOptions& options, const RunConfig& config);

/// Runs one experiment. Returns 0 on success, 2 on validation errors and 3 on
/// numerical failures; diagnostics go to `log`.
int run(const RunOptions& options, std::ostream& log);

/// Executes an already parsed config into `out_dir` (throws on failure).
void execute(const RunConfig& config, const std::filesystem::path& out_dir);

} // namespace collapsim::cli
