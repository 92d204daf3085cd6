#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "p2p/env.hpp"
#include "p2p/run_config.hpp"

namespace p2p::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr const char* kToolVersion = "p2p_sim 1.0.0";

/// Flags shared by every subcommand; set values override the config file.
struct CommonOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<bool> p2p;
    std::optional<std::size_t> trials;  // hp-search only
};

/// Missing inputs such as checkpoints; reported with the validation exit code.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RunConfig effective_config(const CommonOptions& options);

void cmd_generate_profiles(const RunConfig& cfg);
void cmd_train_forecaster(const RunConfig& cfg);
void cmd_train_agents(const RunConfig& cfg);
/// `single_scenario` evaluates only cfg.p2p_enabled instead of both settings.
void cmd_evaluate(const RunConfig& cfg, bool single_scenario);
void cmd_hyperparameter_search(const RunConfig& cfg);

/// Table 1 layout: per metric, rows w/o P2P, with P2P and P2P vs w/o P2P (%),
/// one column per policy family plus the DQN vs DQN Forecasting difference.
std::string comparison_table(const std::vector<env::KpiReport>& reports);

/// (b - a) / a formatted as a signed percentage with one decimal, or "n/a".
std::string percent_diff(double a, double b);

/// Runs one subcommand and maps failures to exit codes; errors go to stderr.
int run(const std::string& command, const CommonOptions& options);

}  // namespace p2p::cli
