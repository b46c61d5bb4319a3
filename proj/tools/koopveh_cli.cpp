// Command-line front end: data generation, model training/evaluation, the
// random-layer robustness study, and closed-loop MPC runs.
#include <cstdint>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "koopveh/experiment.hpp"

namespace xpt = koopveh::experiment;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string preset;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Experiment config file (key = value)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Master seed");
    cmd->add_option("--out", args.out_dir, "Output directory (overrides the config)");
    cmd->add_option("--preset", args.preset, "Size preset")
        ->check(CLI::IsMember({"desk", "paper"}));
}

xpt::RunContext make_context(const CommonArgs& args) {
    xpt::RunContext ctx;
    if (!args.config_path.empty()) ctx.config = xpt::load_config(args.config_path);
    if (!args.preset.empty()) xpt::apply_preset(ctx.config, args.preset);
    ctx.seed = args.seed;
    ctx.out_dir = args.out_dir;
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman-operator vehicle dynamics modeling and predictive control"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        std::function<int(const xpt::RunContext&)> run;
        CommonArgs args;
    };
    Sub subs[] = {
        {"simulate", "Generate plant episodes and a manifest", xpt::cmd_simulate, {}},
        {"train", "Train the configured model and write a checkpoint", xpt::cmd_train, {}},
        {"evaluate", "Multi-step prediction metrics on the test split", xpt::cmd_evaluate, {}},
        {"robustness", "Random-layer repeated-prediction study", xpt::cmd_robustness, {}},
        {"mpc", "Closed-loop tracking against the plant", xpt::cmd_mpc, {}},
    };
    for (auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        add_common(cmd, sub.args);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& sub : subs)
            if (app.got_subcommand(sub.name)) return sub.run(make_context(sub.args));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
