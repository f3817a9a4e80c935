#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flowlab/commands.hpp"
#include "flowlab/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"flowlab: flow-matching velocity-field laboratory"};
    app.require_subcommand(1);

    flowlab::CommandOptions opts;
    std::optional<std::string> source;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "experiment config (JSON)")->required();
        sub->add_option("--out", opts.out, "output directory (default <output_dir>/<name>)");
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--checkpoint", opts.checkpoint, "network checkpoint");
        sub->add_option("--t", opts.t, "evaluation time for field dumps");
        sub->add_option("--source", source, "oracle|network|averaged");
    };
    for (const char* name : {"train", "field", "sample", "profile"}) {
        add_common(app.add_subcommand(name));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? flowlab::kExitOk : flowlab::kExitInput;
    }

    if (source) {
        try {
            opts.source = flowlab::parse_field_source(*source);
        } catch (const flowlab::InputError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return flowlab::kExitInput;
        }
    }
    const std::string command = app.get_subcommands().front()->get_name();
    return flowlab::run_command(command, opts, std::cout, std::cerr);
}
