#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "collapsim/cli.hpp"
#include "collapsim/csv.hpp"
#include "collapsim/error.hpp"
#include "collapsim/master.hpp"
#include "collapsim/parallel.hpp"
#include "collapsim/reduction.hpp"

namespace collapsim::cli {

namespace {

std::vector<std::string> planned_outputs(const RunConfig& config) {
    switch (config.task) {
    case Task::Trajectories: {
        std::vector<std::string> out{"trajectories.csv", "density.csv", "density_raw.csv"};
        if (config.ensemble.statistics) out.emplace_back("statistics.csv");
        if (config.ensemble.dump_paths) out.emplace_back("paths.csv");
        return out;
    }
    case Task::Master: return {"density.csv", "offdiag.csv"};
    case Task::FnCheck: return {"fn_report.csv"};
    case Task::MacroRate: return {"rates.csv", "macro_summary.csv"};
    case Task::KernelDiag:
        if (config.kernel_diag.horizon > 0.0) return {"kernel_diag.csv", "divergence.csv"};
        return {"kernel_diag.csv"};
    }
    return {};
}

void write_manifest(const std::filesystem::path& dir, const RunConfig& config) {
    char hash[19];
    std::snprintf(hash, sizeof hash, "0x%016" PRIx64, fnv1a(config.canonical));
    nlohmann::ordered_json manifest;
    manifest["collapsim_version"] = std::string(kVersion);
    manifest["task"] = std::string(to_string(config.task));
    manifest["config_hash"] = std::string(hash);
    manifest["master_seed"] = config.ensemble.master_seed;
    manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                "." + std::to_string(EIGEN_MINOR_VERSION);
    manifest["outputs"] = planned_outputs(config);
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + (dir / "manifest.json").string());
    }
    out << manifest.dump(2) << '\n';
}

void run_trajectories(const RunConfig& config, const std::filesystem::path& dir) {
    const TimeGrid grid(config.grid->t0, config.grid->t1, config.grid->steps);
    EnsembleSpec spec{make_system(*config.system),
                      grid,
                      make_kernel(*config.kernel),
                      config.ensemble.n,
                      config.ensemble.master_seed,
                      config.ensemble.workers,
                      make_checkpoints(config.ensemble, grid),
                      config.ensemble.proposal,
                      config.ensemble.solver};
    const std::vector<TrajectoryRecord> records = run_ensemble(spec);
    write_trajectory_dump(dir / "trajectories.csv", spec.system.operators, records);
    if (records.size() >= 2) {
        write_density_csv(dir / "density.csv",
                          ensemble_to_density(records, EstimatorMode::Cooked, config.ensemble.batches));
        write_density_csv(dir / "density_raw.csv",
                          ensemble_to_density(records, EstimatorMode::Raw, config.ensemble.batches));
    } else {
        // A single trajectory is its own estimate, without error bars.
        DensityPath single;
        single.times = records.front().times;
        for (const auto& s : records.front().states) {
            single.rho.push_back(projector(s));
        }
        write_density_csv(dir / "density.csv", single);
        write_density_csv(dir / "density_raw.csv", single);
    }
    if (config.ensemble.statistics) {
        const CookedWeights weights = cook_weights(records);
        const BornReport report = born_frequencies(records, weights, spec.system.operators, spec.system.psi0,
                                                   config.ensemble.threshold, config.ensemble.min_decided);
        write_statistics_csv(dir / "statistics.csv", report);
    }
    if (config.ensemble.dump_paths) {
        const NoiseSource source = make_noise_source(spec);
        std::vector<NoiseRealization> paths(spec.trajectories);
        parallel_for(spec.trajectories, spec.workers,
                     [&](std::size_t i) { paths[i] = draw_noise(spec, source, i); });
        write_path_dump(dir / "paths.csv", grid, paths);
    }
}

void run_master(const RunConfig& config, const std::filesystem::path& dir) {
    const TimeGrid grid(config.grid->t0, config.grid->t1, config.grid->steps);
    const QuantumSystem system = make_system(*config.system);
    const CorrelationKernel kernel = make_kernel(*config.kernel);
    const Checkpoints checkpoints = make_checkpoints(config.ensemble, grid);
    const CMatrix rho0 = projector(system.psi0);
    DensityPath path;
    if (kernel.is_white()) {
        const CMatrix* h = system.hamiltonian ? &*system.hamiltonian : nullptr;
        path = evolve_lindblad_csl(h, system.operators, rho0, grid, kernel.gamma(), checkpoints);
    } else {
        if (system.hamiltonian) {
            throw Error(ErrorCode::Validation, "the colored master equation is implemented without H0 only");
        }
        path = evolve_colored_master(system.operators, rho0, grid, kernel, checkpoints);
    }
    write_density_csv(dir / "density.csv", path);

    csv::Writer out(dir / "offdiag.csv", {"t", "i", "j", "abs_numeric", "abs_analytic"});
    const auto d = static_cast<Eigen::Index>(system.dimension());
    for (std::size_t c = 0; c < path.times.size(); ++c) {
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i + 1; j < d; ++j) {
                const double analytic =
                    system.hamiltonian ? std::numeric_limits<double>::quiet_NaN()
                                       : std::abs(rho0(i, j)) * offdiag_analytic(system.operators, kernel,
                                                                                 static_cast<std::size_t>(i),
                                                                                 static_cast<std::size_t>(j),
                                                                                 path.times[c], grid.t0());
                out.field(path.times[c]).field(static_cast<std::int64_t>(i)).field(static_cast<std::int64_t>(j));
                out.field(std::abs(path.rho[c](i, j))).field(analytic);
                out.end_row();
            }
        }
    }
}

void run_fn_check(const RunConfig& config, const std::filesystem::path& dir) {
    const CorrelationKernel kernel = make_kernel(*config.kernel);
    std::vector<FnReport> reports;
    for (Functional f : config.fn_check.functionals) {
        reports.push_back(fn_validate(kernel, f, config.grid->t1, config.grid->t0, config.ensemble.n,
                                      config.ensemble.master_seed, config.grid->steps, config.ensemble.workers));
    }
    write_fn_report(dir / "fn_report.csv", reports);
}

void run_macro_rate(const RunConfig& config, const std::filesystem::path& dir) {
    const MacroConfig& m = *config.macro;
    const MacroBody body = m.body.file.empty() ? MacroBody::cubic_lattice(m.body.lattice_count, m.body.lattice_spacing)
                                               : MacroBody::from_csv(m.body.file);
    const TimeGrid grid(config.grid->t0, config.grid->t1, config.grid->steps);
    const std::vector<RateRow> rows = rate_table(body, m.separations, grid, m.params);
    write_rate_csv(dir / "rates.csv", rows);

    const auto n = static_cast<double>(body.size());
    csv::Writer summary(dir / "macro_summary.csv", {"quantity", "value"});
    summary.field("constituents").field(n).end_row();
    summary.field("gamma").field(m.params.gamma()).end_row();
    summary.field("beta").field(m.params.effective_beta()).end_row();
    summary.field("gamma_times_alpha_over_4pi_pow_1.5").field(unit_bridge(m.params)).end_row();
    summary.field("lambda").field(m.params.lambda).end_row();
    summary.field("saturated_rate").field(saturated_rate(m.params, n)).end_row();
    summary.field("efold_time").field(1.0 / saturated_rate(m.params, n)).end_row();
}

void run_kernel_diag(const RunConfig& config, const std::filesystem::path& dir) {
    const CorrelationKernel kernel = make_kernel(*config.kernel);
    const double t0 = config.kernel_diag.t0;
    csv::Writer out(dir / "kernel_diag.csv", {"t", "D", "G", "f"});
    for (double t : config.kernel_diag.times) {
        if (t < t0) {
            throw Error(ErrorCode::InvalidInterval, "kernel_diag times must not precede t0");
        }
        const double d = kernel.is_white() ? std::numeric_limits<double>::quiet_NaN() : kernel.eval_lag(t - t0);
        out.field(t).field(d).field(kernel.cumulative(t, t0)).field(kernel.double_integral(t, t0));
        out.end_row();
    }
    if (config.kernel_diag.horizon > 0.0) {
        const DivergenceReport report = divergence_check(kernel, config.kernel_diag.horizon, t0);
        csv::Writer div(dir / "divergence.csv", {"t", "f", "diverges"});
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            div.field(report.times[k]).field(report.f_values[k]).field(report.diverges ? 1 : 0).end_row();
        }
    }
}

} // namespace

std::filesystem::path resolve_output(const RunOptions& options, const RunConfig& config) {
    if (options.out) {
        return *options.out;
    }
    if (config.output) {
        return *config.output;
    }
    if (const char* env = std::getenv("COLLAPSIM_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    return "collapsim_out";
}

void execute(const RunConfig& config, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create output directory " + out_dir.string());
    }
    write_manifest(out_dir, config);
    switch (config.task) {
    case Task::Trajectories: run_trajectories(config, out_dir); break;
    case Task::Master: run_master(config, out_dir); break;
    case Task::FnCheck: run_fn_check(config, out_dir); break;
    case Task::MacroRate: run_macro_rate(config, out_dir); break;
    case Task::KernelDiag: run_kernel_diag(config, out_dir); break;
    }
}

int run(const RunOptions& options, std::ostream& log) {
    try {
        RunConfig config = load_config(options.config);
        if (options.seed) {
            config.ensemble.master_seed = *options.seed;
            auto doc = nlohmann::json::parse(config.canonical);
            doc["ensemble"]["master_seed"] = *options.seed;
            config.canonical = doc.dump();
        }
        if (options.workers) {
            config.ensemble.workers = *options.workers;
        }
        const std::filesystem::path dir = resolve_output(options, config);
        execute(config, dir);
        log << "collapsim: " << to_string(config.task) << " finished, outputs in " << dir.string() << '\n';
        return 0;
    } catch (const Error& e) {
        log << "collapsim: " << e.what() << '\n';
        return is_numerical_failure(e.code()) ? 3 : 2;
    } catch (const std::exception& e) {
        log << "collapsim: " << e.what() << '\n';
        return 3;
    }
}

} // namespace collapsim::cli
