#include "p2p/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <stdexcept>

namespace p2p::env {

namespace {

constexpr double kMinOrder = 1e-12;

// Splits a net position into an order on the market side or a grid fallback.
void route(Translation& t, double net, bool market_buys, bool market_sells) {
    if (net < -kMinOrder) {
        if (market_buys) t.order = OrderIntent{market::Side::Buy, -net};
        else t.grid_import = -net;
    } else if (net > kMinOrder) {
        if (market_sells) t.order = OrderIntent{market::Side::Sell, net};
        else t.grid_export = net;
    }
}

}  // namespace

double energy_balance(double generation, double load) { return generation - load; }

BatterySpec default_battery_spec(profiles::ProsumerKind kind) {
    BatterySpec s;
    const double kw = kind == profiles::ProsumerKind::DairyFarm ? 10.0 : 5.0;
    s.max_charge_kw = kw;
    s.max_discharge_kw = kw;
    return s;
}

BatteryState make_battery(double capacity_kwh, const BatterySpec& spec) {
    if (capacity_kwh < 0.0) throw std::invalid_argument("battery capacity must be non-negative");
    if (!(spec.efficiency > 0.0 && spec.efficiency <= 1.0)) throw std::invalid_argument("efficiency must be in (0, 1]");
    if (spec.initial_soc_fraction < 0.0 || spec.initial_soc_fraction > 1.0)
        throw std::invalid_argument("initial SoC fraction must be in [0, 1]");
    BatteryState b;
    b.capacity = capacity_kwh;
    b.soc = capacity_kwh * spec.initial_soc_fraction;
    b.max_charge = spec.max_charge_kw;
    b.max_discharge = spec.max_discharge_kw;
    b.efficiency = spec.efficiency;
    return b;
}

BatteryOutcome apply_battery(const BatteryState& battery, double requested, BatteryDirection direction) {
    BatteryOutcome out{battery, 0.0};
    if (!(requested > 0.0)) return out;
    const double one_way = std::sqrt(battery.efficiency);
    if (direction == BatteryDirection::Charge) {
        const double headroom = std::max(battery.capacity - battery.soc, 0.0);
        const double drawn = std::min({requested, battery.max_charge, headroom / one_way});
        out.battery.soc = std::min(battery.capacity, battery.soc + drawn * one_way);
        out.actual = drawn;
    } else {
        const double delivered = std::min({requested, battery.max_discharge, battery.soc * one_way});
        out.battery.soc = std::max(0.0, battery.soc - delivered / one_way);
        out.actual = delivered;
    }
    return out;
}

Translation translate_action(AgentAction action, double e, const BatteryState& battery) {
    const double surplus = std::max(e, 0.0);
    const double deficit = std::max(-e, 0.0);
    Translation t;
    t.battery = battery;

    auto charge = [&](double kwh) {
        const BatteryOutcome o = apply_battery(battery, kwh, BatteryDirection::Charge);
        t.battery = o.battery;
        t.charge = o.actual;
    };
    auto discharge = [&](double kwh) {
        const BatteryOutcome o = apply_battery(battery, kwh, BatteryDirection::Discharge);
        t.battery = o.battery;
        t.discharge = o.actual;
    };

    switch (action) {
        case AgentAction::ChargeAndBuy: charge(battery.max_charge); break;
        case AgentAction::DischargeAndSell: discharge(battery.max_discharge); break;
        case AgentAction::DischargeAndBuy:
        case AgentAction::SelfAndDischarge: discharge(deficit); break;
        case AgentAction::SelfAndCharge: charge(surplus); break;
        case AgentAction::Buy:
        case AgentAction::Sell:
        case AgentAction::SelfConsumption: break;
    }

    const double net = e + t.discharge - t.charge;
    switch (action) {
        case AgentAction::ChargeAndBuy:
        case AgentAction::Buy:
        case AgentAction::DischargeAndBuy: route(t, net, true, false); break;
        case AgentAction::Sell:
        case AgentAction::DischargeAndSell: route(t, net, false, true); break;
        case AgentAction::SelfConsumption:
        case AgentAction::SelfAndCharge:
        case AgentAction::SelfAndDischarge: route(t, net, false, false); break;
    }
    return t;
}

// ---------------------------------------------------------------------------

std::size_t Community::hours() const {
    if (agents.empty()) return 0;
    std::size_t h = agents.front().profile.size();
    for (const auto& a : agents) h = std::min(h, a.profile.size());
    return h;
}

Community make_community(std::span<const profiles::ProsumerSpec> specs, std::span<const profiles::EnergyProfile> profiles) {
    if (specs.size() != profiles.size()) throw std::invalid_argument("specs and profiles differ in count");
    Community c;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].id != profiles[i].prosumer_id)
            throw std::invalid_argument("profile '" + profiles[i].prosumer_id + "' does not match spec '" + specs[i].id + "'");
        if (profiles[i].start != profiles.front().start)
            throw std::invalid_argument("profiles must share one start timestamp");
        AgentSetup a;
        a.spec = specs[i];
        a.profile = profiles[i];
        a.battery = make_battery(specs[i].battery_capacity_kwh, default_battery_spec(specs[i].kind));
        double peak = 0.0;
        for (std::size_t t = 0; t < a.profile.size(); ++t)
            peak = std::max({peak, a.profile.load[t], a.profile.generation[t]});
        a.energy_scale = peak > 0.0 ? peak : 1.0;
        c.agents.push_back(std::move(a));
    }
    return c;
}

WorldState reset(const Community& community, std::size_t start_hour) {
    if (start_hour >= community.hours()) throw std::out_of_range("start hour beyond the profile span");
    WorldState w;
    w.step = start_hour;
    for (const auto& a : community.agents) w.batteries.push_back(a.battery);
    return w;
}

rewards::AgentObservation observe(const Community& community, const WorldState& world, std::size_t i) {
    const AgentSetup& a = community.agents.at(i);
    rewards::AgentObservation obs;
    obs.load = a.profile.load.at(world.step);
    obs.generation = a.profile.generation.at(world.step);
    obs.soc_pct = world.batteries.at(i).soc_pct();
    obs.hour = profiles::hour_of_day(a.profile.timestamp(world.step));
    obs.tariff = rewards::tariff_period(obs.hour, community.calendar);
    if (community.forecasts != nullptr) {
        obs.forecast = community.forecasts->at(i, world.step);
        if (obs.forecast) {
            obs.confidence = rewards::aggregate_confidence(*obs.forecast);
            obs.peak_deficit = rewards::peak_deficit(*obs.forecast, obs.hour, community.calendar);
        }
    }
    return obs;
}

std::pair<WorldState, StepResult> env_step(const Community& community, const WorldState& world,
                                           std::span<const AgentAction> actions) {
    const std::size_t n = community.size();
    if (actions.size() != n) throw std::invalid_argument("env_step needs exactly one action per agent");
    if (world.step >= community.hours()) throw std::out_of_range("episode ran past the end of the profiles");

    WorldState next = world;
    StepResult r;
    r.actions.assign(actions.begin(), actions.end());
    r.flows.resize(n);
    r.rewards.resize(n);

    std::vector<market::Order> bids, asks;
    double supply = 0.0, demand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const rewards::AgentObservation obs = observe(community, world, i);
        r.observations.push_back(obs);
        r.tariff = obs.tariff;
        const Translation t = translate_action(actions[i], energy_balance(obs.generation, obs.load), world.batteries[i]);
        next.batteries[i] = t.battery;
        AgentFlows& f = r.flows[i];
        f.load = obs.load;
        f.generation = obs.generation;
        f.charge = t.charge;
        f.discharge = t.discharge;
        f.grid_import = t.grid_import;
        f.grid_export = t.grid_export;
        if (t.order) {
            market::Order o{community.agents[i].spec.id, t.order->side, t.order->quantity, 0.0};
            if (o.side == market::Side::Buy) {
                demand += o.quantity;
                bids.push_back(std::move(o));
            } else {
                supply += o.quantity;
                asks.push_back(std::move(o));
            }
        }
    }

    const double lambda_buy = community.calendar.lambda_buy(r.tariff);
    const double lambda_sell = community.calendar.lambda_sell;
    r.prices = market::internal_prices(market::compute_sdr(supply, demand), lambda_buy, lambda_sell);
    for (auto& o : bids) o.price = r.prices.ibp;
    for (auto& o : asks) o.price = r.prices.isp;

    if (community.p2p_enabled) {
        const market::ClearingResult cleared = market::clear_double_auction(bids, asks, r.prices);
        r.settlement = market::settle(cleared.trades, cleared.residual_buys, cleared.residual_sells, r.prices);
    } else {
        r.settlement = market::settle({}, bids, asks, r.prices);
    }

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[community.agents[i].spec.id] = i;
    for (const auto& t : r.settlement.trades) {
        AgentFlows& b = r.flows[index.at(t.buyer_id)];
        AgentFlows& s = r.flows[index.at(t.seller_id)];
        b.p2p_bought += t.quantity;
        b.cost += t.quantity * t.buyer_price;
        s.p2p_sold += t.quantity;
        s.revenue += t.quantity * t.seller_price;
    }
    for (const auto& [id, kwh] : r.settlement.grid_purchases) r.flows[index.at(id)].grid_import += kwh;
    for (const auto& [id, kwh] : r.settlement.grid_sales) r.flows[index.at(id)].grid_export += kwh;

    r.grid_cash = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        AgentFlows& f = r.flows[i];
        f.cost += f.grid_import * lambda_buy;
        f.revenue += f.grid_export * lambda_sell;
        f.cash = f.revenue - f.cost;
        r.grid_cash += f.grid_import * lambda_buy - f.grid_export * lambda_sell;
        r.rewards[i] = rewards::reward(actions[i], r.observations[i]);
    }
    next.operator_spread += r.settlement.operator_spread;

    ++next.step;
    if (r.observations.empty() ? false : r.observations.front().hour == 23) ++next.day;
    return {std::move(next), std::move(r)};
}

// ---------------------------------------------------------------------------

EpisodeLog run_episode(const Community& community, const Policy& policy, std::size_t start_hour, std::size_t hours,
                       bool keep_rows) {
    if (hours == 0) throw std::invalid_argument("episode must span at least one hour");
    if (start_hour + hours > community.hours()) throw std::invalid_argument("episode runs past the end of the profiles");
    if (community.forecasts != nullptr) {
        if (start_hour < community.forecasts->first_valid() || start_hour + hours > community.forecasts->end_valid())
            throw std::invalid_argument("episode span is shorter than the forecaster needs (window plus horizon)");
    }

    EpisodeLog log;
    for (const auto& a : community.agents) log.agent_ids.push_back(a.spec.id);
    log.totals.resize(community.size());
    if (keep_rows) log.rows.reserve(hours * community.size());

    WorldState world = reset(community, start_hour);
    std::vector<AgentAction> actions(community.size());
    for (std::size_t h = 0; h < hours; ++h) {
        for (std::size_t i = 0; i < community.size(); ++i)
            actions[i] = policy(i, observe(community, world, i), world.batteries[i]);
        auto [next, r] = env_step(community, world, actions);
        const bool peak = r.tariff == rewards::TariffPeriod::P;
        for (std::size_t i = 0; i < community.size(); ++i) {
            const AgentFlows& f = r.flows[i];
            AgentTotals& tot = log.totals[i];
            tot.cost += f.cost;
            tot.revenue += f.revenue;
            tot.grid_import += f.grid_import;
            if (peak) tot.peak_import += f.grid_import;
            tot.reward += r.rewards[i];
            if (keep_rows) {
                log.rows.push_back({world.step, log.agent_ids[i], actions[i], f.load, f.generation,
                                    next.batteries[i].soc, f.p2p_bought - f.p2p_sold, f.grid_import - f.grid_export,
                                    r.rewards[i], r.prices.isp, r.prices.ibp});
            }
        }
        world = std::move(next);
    }
    return log;
}

void write_episode_csv(const std::filesystem::path& path, const EpisodeLog& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write episode log '" + path.string() + "'");
    out << "step,agent,action,load,generation,soc,trade_kwh,grid_kwh,reward,isp,ibp\n" << std::setprecision(10);
    for (const auto& r : log.rows)
        out << r.step << ',' << r.agent << ',' << rewards::to_string(r.action) << ',' << r.load << ',' << r.generation
            << ',' << r.soc << ',' << r.trade_kwh << ',' << r.grid_kwh << ',' << r.reward << ',' << r.isp << ','
            << r.ibp << '\n';
}

namespace {

Stat stat_of(const std::vector<double>& xs) {
    Stat s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

}  // namespace

KpiReport kpi_report(std::span<const EpisodeLog> logs, const std::string& scenario, bool p2p_enabled) {
    KpiReport k;
    k.scenario = scenario;
    k.p2p_enabled = p2p_enabled;
    k.episodes = logs.size();
    if (logs.empty()) return k;
    k.agent_ids = logs.front().agent_ids;
    k.per_agent.assign(k.agent_ids.size(), {});

    std::vector<double> cost, revenue, peak, reward;
    const double inv = 1.0 / static_cast<double>(logs.size());
    for (const auto& log : logs) {
        if (log.agent_ids != k.agent_ids) throw std::invalid_argument("episode logs cover different agents");
        double c = 0, rv = 0, p = 0, rw = 0;
        for (std::size_t i = 0; i < log.totals.size(); ++i) {
            const AgentTotals& t = log.totals[i];
            c += t.cost;
            rv += t.revenue;
            p += t.peak_import;
            rw += t.reward;
            k.per_agent[i].cost += t.cost * inv;
            k.per_agent[i].revenue += t.revenue * inv;
            k.per_agent[i].peak_import += t.peak_import * inv;
            k.per_agent[i].grid_import += t.grid_import * inv;
            k.per_agent[i].reward += t.reward * inv;
        }
        cost.push_back(c);
        revenue.push_back(rv);
        peak.push_back(p);
        reward.push_back(rw);
    }
    k.cost_bought = stat_of(cost);
    k.revenue_sold = stat_of(revenue);
    k.peak_hour_grid_demand = stat_of(peak);
    k.total_reward = stat_of(reward);
    return k;
}

nlohmann::json to_json(const KpiReport& report) {
    auto stat = [](const Stat& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t i = 0; i < report.agent_ids.size(); ++i) {
        const AgentTotals& t = report.per_agent[i];
        agents.push_back({{"id", report.agent_ids[i]},
                          {"cost_bought", t.cost},
                          {"revenue_sold", t.revenue},
                          {"peak_hour_grid_demand", t.peak_import},
                          {"grid_import", t.grid_import},
                          {"reward", t.reward}});
    }
    return {{"scenario", report.scenario},
            {"p2p_enabled", report.p2p_enabled},
            {"episodes", report.episodes},
            {"cost_bought", stat(report.cost_bought)},
            {"revenue_sold", stat(report.revenue_sold)},
            {"peak_hour_grid_demand", stat(report.peak_hour_grid_demand)},
            {"total_reward", stat(report.total_reward)},
            {"agents", agents}};
}

}  // namespace p2p::env
