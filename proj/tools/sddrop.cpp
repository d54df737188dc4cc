// sddrop: train and evaluate dropout-sampled self-distillation models.
//
//   sddrop <command> --config run.json [key.path=value ...]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdd/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Dropout-sampled self-distillation toolkit"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::vector<std::string> overrides;
    for (const auto& name : sdd::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
        sub->add_option("overrides", overrides, "dotted-path overrides, e.g. distill.lambda_sdd=0.5");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? sdd::kExitOk : sdd::kExitConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    return sdd::run_command(command, config_path, overrides, std::cout, std::cerr);
}
