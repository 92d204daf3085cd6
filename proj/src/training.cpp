#include "p2p/training.hpp"

#include <memory>
#include <stdexcept>

namespace p2p::training {

std::size_t pick_start_hour(const env::Community& community, std::size_t hours, bool random, std::mt19937_64& rng) {
    std::size_t lo = 0;
    std::size_t end = community.hours();
    if (community.forecasts != nullptr) {
        lo = community.forecasts->first_valid();
        end = std::min(end, community.forecasts->end_valid());
    }
    if (end < hours + 1 || end - hours - 1 < lo)
        throw std::invalid_argument("profiles too short for a " + std::to_string(hours) + "-hour episode");
    const std::size_t hi = end - hours - 1;

    std::vector<std::size_t> midnights;
    const auto& profile = community.agents.front().profile;
    for (std::size_t t = lo; t <= hi; ++t)
        if (profiles::hour_of_day(profile.timestamp(t)) == 0) midnights.push_back(t);
    if (midnights.empty()) return lo;
    if (!random) return midnights.front();
    std::uniform_int_distribution<std::size_t> pick(0, midnights.size() - 1);
    return midnights[pick(rng)];
}

TrainedAgents train_agents(const env::Community& community, const AgentTrainingConfig& cfg) {
    cfg.learner.validate();
    if (community.size() == 0) throw std::invalid_argument("community has no agents");
    if (cfg.episode_hours == 0) throw std::invalid_argument("episode_hours must be positive");
    const agents::StateMode mode = cfg.learner.state_mode;
    const std::size_t horizon = community.forecasts != nullptr ? community.forecasts->horizon : 3;
    const std::size_t dim = agents::state_dim(mode, horizon);

    TrainedAgents out;
    for (std::size_t i = 0; i < community.size(); ++i) {
        agents::LearnerConfig lc = cfg.learner;
        lc.seed = cfg.learner.seed + 1000003ULL * i;
        out.learners.emplace_back(dim, lc);
    }
    out.curves.resize(community.size());
    std::mt19937_64 rng(cfg.seed);

    auto state_of = [&](const env::WorldState& w, std::size_t i) {
        const auto obs = env::observe(community, w, i);
        return agents::build_state(obs, obs.forecast, w.batteries[i], community.agents[i].energy_scale, mode);
    };

    auto greedy_reward = [&]() {
        std::vector<agents::PolicyCheckpoint> cps;
        for (std::size_t i = 0; i < community.size(); ++i) cps.push_back(checkpoint_of(community, i, out.learners[i]));
        const auto logs = evaluate(
            community, [&](std::uint64_t s) { return dqn_policy(community, cps, 0.0, s); }, cfg.eval_episodes,
            cfg.eval_hours, cfg.eval_seed);
        return env::kpi_report(logs, "eval", community.p2p_enabled).total_reward.mean /
               static_cast<double>(community.size());
    };
    if (cfg.eval_every > 0) out.eval_curve.push_back({0, greedy_reward()});

    std::size_t steps = 0;
    std::vector<env::AgentAction> actions(community.size());
    std::vector<Eigen::VectorXd> states(community.size());
    while (steps < cfg.total_steps) {
        const std::size_t len = std::min(cfg.episode_hours, cfg.total_steps - steps);
        const std::size_t start = pick_start_hour(community, len, cfg.random_start, rng);
        env::WorldState world = env::reset(community, start);
        std::vector<double> episode_reward(community.size(), 0.0);
        for (std::size_t i = 0; i < community.size(); ++i) states[i] = state_of(world, i);

        for (std::size_t h = 0; h < len; ++h) {
            for (std::size_t i = 0; i < community.size(); ++i) actions[i] = out.learners[i].act(states[i]);
            auto [next, r] = env::env_step(community, world, actions);
            for (std::size_t i = 0; i < community.size(); ++i) {
                Eigen::VectorXd s_next = state_of(next, i);
                out.learners[i].observe({states[i], rewards::index_of(actions[i]), r.rewards[i], s_next, false});
                episode_reward[i] += r.rewards[i];
                states[i] = std::move(s_next);
            }
            world = std::move(next);
            ++steps;
            if (cfg.eval_every > 0 && steps % cfg.eval_every == 0) out.eval_curve.push_back({steps, greedy_reward()});
        }

        double mean = 0.0;
        for (std::size_t i = 0; i < community.size(); ++i) {
            const auto& l = out.learners[i];
            out.curves[i].push_back({l.steps(), l.epsilon(), l.last_mean_q(), episode_reward[i]});
            mean += episode_reward[i] / static_cast<double>(community.size());
        }
        out.episode_end_steps.push_back(steps);
        out.community_rewards.push_back(mean);
    }
    return out;
}

agents::PolicyCheckpoint checkpoint_of(const env::Community& community, std::size_t agent,
                                       const agents::DqnLearner& learner) {
    agents::PolicyCheckpoint p;
    p.config = learner.config();
    p.state_dim = learner.q().input_dim();
    p.energy_scale = community.agents.at(agent).energy_scale;
    p.q = learner.q();
    return p;
}

env::Policy dqn_policy(const env::Community& community, std::vector<agents::PolicyCheckpoint> policies, double epsilon,
                       std::uint64_t seed) {
    if (policies.size() != community.size()) throw std::invalid_argument("one policy checkpoint per agent is required");
    auto rng = std::make_shared<std::mt19937_64>(seed);
    auto shared = std::make_shared<std::vector<agents::PolicyCheckpoint>>(std::move(policies));
    return [shared, rng, epsilon](std::size_t i, const rewards::AgentObservation& obs, const env::BatteryState& b) {
        const agents::PolicyCheckpoint& p = (*shared)[i];
        const Eigen::VectorXd s = agents::build_state(obs, obs.forecast, b, p.energy_scale, p.config.state_mode);
        return agents::select_action(p.q, s, epsilon, *rng);
    };
}

env::Policy rule_based_policy() {
    return [](std::size_t, const rewards::AgentObservation& obs, const env::BatteryState&) {
        return agents::rule_based_policy(obs);
    };
}

env::Policy random_policy(std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [rng](std::size_t, const rewards::AgentObservation&, const env::BatteryState&) {
        std::uniform_int_distribution<std::size_t> pick(0, rewards::kActionCount - 1);
        return rewards::action_from_index(pick(*rng));
    };
}

std::vector<env::EpisodeLog> evaluate(const env::Community& community,
                                      const std::function<env::Policy(std::uint64_t episode_seed)>& make_policy,
                                      std::size_t episodes, std::size_t hours, std::uint64_t seed, bool keep_rows) {
    std::vector<env::EpisodeLog> logs;
    for (std::size_t e = 0; e < episodes; ++e) {
        const std::uint64_t episode_seed = seed + 7919ULL * (e + 1);
        std::mt19937_64 rng(episode_seed);
        const std::size_t start = pick_start_hour(community, hours, true, rng);
        logs.push_back(env::run_episode(community, make_policy(episode_seed), start, hours, keep_rows));
    }
    return logs;
}

}  // namespace p2p::training
