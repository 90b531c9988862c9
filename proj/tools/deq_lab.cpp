#include "deq/cli/commands.hpp"
#include "deq/cli/config.hpp"
#include "deq/cli/output.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"Deep equilibrium model lab: training, kernels and concentration experiments"};
    app.set_version_flag("--version", deq::cli::kArtifactVersion);
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    bool print_config = false;
    app.add_option("-c,--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override one key, e.g. --set model.m=2000")->allow_extra_args(false);
    app.add_flag("--print-config", print_config, "Print the effective config and exit");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "Generate a synthetic sphere dataset"},
        {"kernel", "Population kernel, lambda*, suggested width and depth"},
        {"check", "Initial-condition report at initialization"},
        {"train", "Gradient descent with monitors, checkpoints and plots"},
        {"concentration", "Monte Carlo concentration experiments"},
        {"grad-check", "Finite-difference and dense Kronecker gradient oracles"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(deq::cli::ExitCode::config);
    }

    if (app.get_subcommands().empty() && !print_config) {
        std::cerr << "A subcommand is required\nRun with --help for more information.\n";
        return static_cast<int>(deq::cli::ExitCode::config);
    }
    deq::cli::Json cfg;
    try {
        std::optional<std::filesystem::path> file;
        if (!config_path.empty()) file = config_path;
        cfg = deq::cli::load_config(file, overrides);
    } catch (const deq::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return static_cast<int>(deq::cli::ExitCode::config);
    }
    if (print_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
    }
    return deq::cli::run_command(app.get_subcommands().front()->get_name(), cfg, std::cout, std::cerr);
}
