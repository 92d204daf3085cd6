#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2p/agents.hpp"
#include "p2p/ktu/model.hpp"
#include "p2p/profiles.hpp"
#include "p2p/rewards.hpp"

namespace p2p::cli {

/// Collected validation failures, one "field: problem" entry each.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct ProfileSource {
    std::string csv_path;  // empty = synthetic generation
    std::vector<profiles::ProsumerSpec> prosumers;  // empty = default community
    std::size_t agent_count = 0;                    // 0 = all prosumers
    std::size_t hours = profiles::kHoursPerYear;
    double latitude_deg = profiles::kHelsinkiLatitude;
};

struct ForecasterSettings {
    std::string mode = "oracle";  // "oracle" or "ktu"
    std::string checkpoint;       // ktu mode; a directory when per_prosumer is set
    bool per_prosumer = false;    // one model per prosumer instead of a shared one
    double oracle_noise = 0.05;
    ktu::KtuConfig ktu;
};

struct TrainingSettings {
    std::size_t total_steps = 50000;
    std::size_t episode_hours = 720;
    bool random_start = true;
    std::size_t eval_every = 0;
    std::vector<std::string> variants = {"forecast_free", "full"};
};

struct EvaluationSettings {
    std::size_t episodes = 10;
    std::size_t episode_hours = 720;
    double epsilon = 0.05;
    std::vector<std::string> policies = {"rule_based", "dqn", "dqn_forecasting"};
    std::map<std::string, std::string> checkpoints;  // family -> directory
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SearchSpace {
    Range learning_rate{1e-4, 3e-3};  // sampled log-uniformly
    std::vector<std::size_t> batch_size{16, 32, 64};
    std::vector<std::size_t> d_model{8, 16, 32};
    std::vector<std::size_t> n_heads{1, 2, 4};
    Range dropout{0.0, 0.2};
    Range alpha_smooth{0.0, 0.05};
    Range beta_night{0.0, 0.5};
};

struct HpSearchSettings {
    std::size_t trials = 4;
    std::size_t max_epochs = 2;
    SearchSpace space;
};

struct RunConfig {
    std::string scenario = "desk";
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    bool p2p_enabled = true;
    ProfileSource profiles;
    rewards::TariffCalendar calendar = rewards::TariffCalendar::default_calendar();
    ForecasterSettings forecaster;
    agents::LearnerConfig learner;
    TrainingSettings training;
    EvaluationSettings evaluation;
    HpSearchSettings hp_search;

    std::filesystem::path base_dir;  // relative paths resolve here; not serialized

    std::filesystem::path resolve(const std::string& path) const;
};

/// Parses and validates; unknown keys and bad values are reported by field.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form: every field present, keys sorted.
nlohmann::json to_json(const RunConfig& cfg);
std::string canonical_dump(const RunConfig& cfg);

/// Field-by-field semantic checks, including referenced paths.
std::vector<std::string> validate(const RunConfig& cfg);

/// 64-bit FNV-1a of the canonical form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace p2p::cli
