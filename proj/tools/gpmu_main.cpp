#include "gpmu/pipeline.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"Bayesian model updating with Gaussian-process prediction-error kernels"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synthesize", "generate a dataset from the config's synthesis block"},
        {"infer-mpv", "two-stage MPV search + Laplace posterior summary"},
        {"infer-tmcmc", "transitional MCMC posterior samples and evidence"},
        {"predict", "posterior-predictive response over the held-out span"},
        {"reconstruct", "infill of the configured missing-data gap"},
        {"select", "rank kernel candidates and/or sweep MMTE orders"},
        {"diagnose", "residual ACF / periodogram / spectral peaks"},
        {"report", "summarize the artifacts of earlier stages"},
    };

    gpmu::RunOptions options;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string chosen;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", options.config_path, "experiment config (JSON)")
            ->required();
        sub->add_option("--out", options.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", seed, "seed override (u64)")->each([&](const std::string&) {
            seed_given = true;
        });
        sub->add_option("--threads", options.threads, "worker threads")->default_val(1);
        sub->add_flag("--quiet", options.quiet, "suppress progress output");
        sub->callback([&chosen, name = name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? gpmu::kExitOk : gpmu::kExitValidation; // help exits 0
    }
    if (seed_given) options.seed_override = seed;

    try {
        return gpmu::run_command(chosen, options);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gpmu::kExitNumerical;
    }
}
