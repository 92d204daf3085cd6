#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "p2p/commands.hpp"

namespace {

void add_common(CLI::App& sub, p2p::cli::CommonOptions& opt, std::string& p2p_flag) {
    sub.add_option("--config", opt.config, "Run configuration (JSON)")->required();
    sub.add_option("--seed", opt.seed, "Override the run seed");
    sub.add_option("--out", opt.out, "Override the output directory");
    sub.add_option("--p2p", p2p_flag, "Enable or disable peer-to-peer trading")
        ->check(CLI::IsMember({"on", "off"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-to-peer energy community simulator"};
    app.set_version_flag("--version", std::string(p2p::cli::kToolVersion));
    app.require_subcommand(1);

    p2p::cli::CommonOptions opt;
    std::string p2p_flag;
    const char* commands[][2] = {
        {"generate-profiles", "Write synthetic or imported hourly profiles"},
        {"train-forecaster", "Train the probabilistic forecaster"},
        {"train-agents", "Train one DQN agent per prosumer"},
        {"evaluate", "Evaluate policy families with and without P2P trading"},
        {"hp-search", "Random search over forecaster hyperparameters"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c[0], c[1]);
        add_common(*sub, opt, p2p_flag);
        if (std::string(c[0]) == "hp-search") sub->add_option("--trials", opt.trials, "Number of trials");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? p2p::cli::kExitOk : p2p::cli::kExitValidation;
    }
    if (!p2p_flag.empty()) opt.p2p = p2p_flag == "on";
    return p2p::cli::run(app.get_subcommands().front()->get_name(), opt);
}
