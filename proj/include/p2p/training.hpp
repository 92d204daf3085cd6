#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "p2p/agents.hpp"
#include "p2p/env.hpp"

namespace p2p::training {

struct AgentTrainingConfig {
    agents::LearnerConfig learner;
    std::size_t total_steps = 50000;  // environment steps; every agent acts once per step
    std::size_t episode_hours = 720;
    bool random_start = true;  // episodes begin at a random midnight, else the first valid one
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;  // steps between greedy evaluations, 0 disables
    std::size_t eval_episodes = 2;
    std::size_t eval_hours = 720;
    std::uint64_t eval_seed = 12345;
};

struct EvalPoint {
    std::size_t step = 0;
    double reward = 0.0;  // mean per-agent episode reward, greedy policy
};

struct TrainedAgents {
    std::vector<agents::DqnLearner> learners;
    std::vector<std::vector<agents::MetricsRow>> curves;  // per agent, one row per episode
    std::vector<std::size_t> episode_end_steps;
    std::vector<double> community_rewards;  // mean per-agent episode reward
    std::vector<EvalPoint> eval_curve;
};

/// Midnight start hour that leaves room for `hours` steps plus one observation
/// with forecasts available. Throws when no such hour exists.
std::size_t pick_start_hour(const env::Community& community, std::size_t hours, bool random, std::mt19937_64& rng);

/// Independent DQN learners, one per agent, trained in the shared environment.
TrainedAgents train_agents(const env::Community& community, const AgentTrainingConfig& cfg);

/// Greedy-with-probability-epsilon policy over trained Q-networks.
env::Policy dqn_policy(const env::Community& community, std::vector<agents::PolicyCheckpoint> policies, double epsilon,
                       std::uint64_t seed);

env::Policy rule_based_policy();
env::Policy random_policy(std::uint64_t seed);

agents::PolicyCheckpoint checkpoint_of(const env::Community& community, std::size_t agent,
                                       const agents::DqnLearner& learner);

/// `episodes` runs with starts drawn from `seed`; the factory builds each episode's policy.
std::vector<env::EpisodeLog> evaluate(const env::Community& community,
                                      const std::function<env::Policy(std::uint64_t episode_seed)>& make_policy,
                                      std::size_t episodes, std::size_t hours, std::uint64_t seed,
                                      bool keep_rows = false);

}  // namespace p2p::training
