#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2p/battery.hpp"
#include "p2p/forecasts.hpp"
#include "p2p/market.hpp"
#include "p2p/profiles.hpp"
#include "p2p/rewards.hpp"

namespace p2p::env {

using rewards::AgentAction;

/// E = G - L, positive for surplus.
double energy_balance(double generation, double load);

struct BatterySpec {
    double max_charge_kw = 5.0;
    double max_discharge_kw = 5.0;
    double efficiency = 0.9;
    double initial_soc_fraction = 0.5;
};

/// Households 5 kW, farms 10 kW, round trip 0.9, half full.
BatterySpec default_battery_spec(profiles::ProsumerKind kind);
BatteryState make_battery(double capacity_kwh, const BatterySpec& spec);

struct OrderIntent {
    market::Side side = market::Side::Buy;
    double quantity = 0.0;
};

/// Physical outcome of one action before the market runs.
struct Translation {
    BatteryState battery;    // after the battery operation
    double charge = 0.0;     // grid-side kWh into the battery
    double discharge = 0.0;  // kWh delivered by the battery
    std::optional<OrderIntent> order;
    double grid_import = 0.0;  // fallback, bypasses the market
    double grid_export = 0.0;
};

/// The normative action-to-flow table; at most one order per agent.
Translation translate_action(AgentAction action, double energy_balance, const BatteryState& battery);

struct AgentSetup {
    profiles::ProsumerSpec spec;
    profiles::EnergyProfile profile;
    BatteryState battery;  // initial state at reset
    double energy_scale = 1.0;
};

/// Static part of the world: profiles, prices, switches.
struct Community {
    std::vector<AgentSetup> agents;
    rewards::TariffCalendar calendar = rewards::TariffCalendar::default_calendar();
    bool p2p_enabled = true;
    const forecasts::ForecastTable* forecasts = nullptr;  // non-owning, may be null

    std::size_t size() const { return agents.size(); }
    std::size_t hours() const;
};

/// Builds agent setups with default batteries and energy scales.
Community make_community(std::span<const profiles::ProsumerSpec> specs, std::span<const profiles::EnergyProfile> profiles);

struct WorldState {
    std::size_t step = 0;  // profile hour index
    std::size_t day = 0;
    std::vector<BatteryState> batteries;
    double operator_spread = 0.0;
};

WorldState reset(const Community& community, std::size_t start_hour);

/// Observation of agent `i` at the current step.
rewards::AgentObservation observe(const Community& community, const WorldState& world, std::size_t i);

struct AgentFlows {
    double load = 0.0;
    double generation = 0.0;
    double charge = 0.0;
    double discharge = 0.0;
    double p2p_bought = 0.0;
    double p2p_sold = 0.0;
    double grid_import = 0.0;  // market residual plus fallback
    double grid_export = 0.0;
    double cash = 0.0;  // received minus paid
    double cost = 0.0;
    double revenue = 0.0;
};

struct StepResult {
    std::vector<AgentAction> actions;
    std::vector<double> rewards;
    std::vector<AgentFlows> flows;
    std::vector<rewards::AgentObservation> observations;  // pre-action, used for rewards
    market::Settlement settlement;
    market::PriceSignal prices;
    rewards::TariffPeriod tariff = rewards::TariffPeriod::N;
    double grid_cash = 0.0;  // net cash received by the grid, fallback included
};

/// Pure transition: translation, market clearing (or direct grid settlement
/// when P2P is off), rewards, then the clock advances by one hour.
std::pair<WorldState, StepResult> env_step(const Community& community, const WorldState& world,
                                           std::span<const AgentAction> actions);

// ---------------------------------------------------------------------------
// Episodes and KPIs

/// Chooses an action for agent `i` given its observation and battery.
using Policy = std::function<AgentAction(std::size_t i, const rewards::AgentObservation&, const BatteryState&)>;

struct EpisodeRow {
    std::size_t step = 0;
    std::string agent;
    AgentAction action = AgentAction::SelfConsumption;
    double load = 0.0;
    double generation = 0.0;
    double soc = 0.0;
    double trade_kwh = 0.0;  // P2P bought minus sold
    double grid_kwh = 0.0;   // imported minus exported
    double reward = 0.0;
    double isp = 0.0;
    double ibp = 0.0;
};

struct AgentTotals {
    double cost = 0.0;
    double revenue = 0.0;
    double peak_import = 0.0;
    double grid_import = 0.0;
    double reward = 0.0;
};

struct EpisodeLog {
    std::vector<EpisodeRow> rows;
    std::vector<std::string> agent_ids;
    std::vector<AgentTotals> totals;
};

/// Rejects spans that run past the available forecasts.
EpisodeLog run_episode(const Community& community, const Policy& policy, std::size_t start_hour, std::size_t hours,
                       bool keep_rows = true);

void write_episode_csv(const std::filesystem::path& path, const EpisodeLog& log);

struct Stat {
    double mean = 0.0;
    double std = 0.0;
};

struct KpiReport {
    std::string scenario;
    bool p2p_enabled = true;
    std::size_t episodes = 0;
    Stat cost_bought;
    Stat revenue_sold;
    Stat peak_hour_grid_demand;
    Stat total_reward;
    std::vector<std::string> agent_ids;
    std::vector<AgentTotals> per_agent;  // episode means
};

/// Community totals per episode, then mean and sample std across episodes.
KpiReport kpi_report(std::span<const EpisodeLog> logs, const std::string& scenario, bool p2p_enabled);

nlohmann::json to_json(const KpiReport& report);

}  // namespace p2p::env
