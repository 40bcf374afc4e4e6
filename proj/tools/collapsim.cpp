#include <iostream>

#include <CLI11.hpp>

#include "collapsim/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"collapsim: collapse dynamics with colored Gaussian noise"};
    app.set_version_flag("--version", std::string(collapsim::cli::kVersion));

    std::string config;
    std::string out;
    unsigned workers = 0;
    std::uint64_t seed = 0;
    app.add_option("--config", config, "Experiment config (JSON)")->required();
    auto* out_opt = app.add_option("--out", out, "Output directory (default: $COLLAPSIM_OUT)");
    auto* workers_opt = app.add_option("--workers", workers, "Worker threads (0 = all cores)");
    auto* seed_opt = app.add_option("--seed", seed, "Master seed, overrides the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    collapsim::cli::RunOptions options;
    options.config = config;
    if (*out_opt) options.out = out;
    if (*workers_opt) options.workers = workers;
    if (*seed_opt) options.seed = seed;
    return collapsim::cli::run(options, std::cerr);
}
