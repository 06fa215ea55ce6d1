#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lyapframe/runner.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Frame-flow Lyapunov experiments driven by JSON configs"};
    app.require_subcommand(1);

    std::string config;
    lyapframe::RunOptions opts;

    auto* run = app.add_subcommand("run", "Run every experiment in a config");
    run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--output", opts.output_dir, "Output directory (overrides output_dir)");
    run->add_option("--threads", opts.threads, "Experiments run concurrently")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : lyapframe::exit_config;
    }

    if (run->parsed()) return lyapframe::run_command(config, opts, std::cerr);
    return lyapframe::validate_command(config, std::cout);
}
