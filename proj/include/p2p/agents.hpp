#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "p2p/adam.hpp"
#include "p2p/battery.hpp"
#include "p2p/forecast.hpp"
#include "p2p/rewards.hpp"

namespace p2p::agents {

class AgentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// State

enum class StateMode {
    Full,          // [L, G, B, FL, FG, U_L, U_G], horizon means
    ForecastFree,  // same layout, forecast blocks zeroed
    Flattened,     // [L, G, B, mu_L(h), mu_P(h), sigma_L(h), sigma_P(h)]
};

std::string to_string(StateMode m);
StateMode state_mode_from_string(const std::string& s);

inline constexpr std::size_t kStateDim = 7;

std::size_t state_dim(StateMode mode, std::size_t horizon = 3);

/// Energy components are divided by `energy_scale` (kWh); B is the SoC fraction.
/// Throws AgentError when a forecast-using mode has no forecast.
Eigen::VectorXd build_state(const rewards::AgentObservation& obs, const std::optional<ForecastDistribution>& forecast,
                            const env::BatteryState& battery, double energy_scale, StateMode mode);

// ---------------------------------------------------------------------------
// Q-network

/// Two hidden ReLU layers; columns of a batch are samples.
class QFunction {
public:
    QFunction() = default;
    QFunction(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

    std::size_t input_dim() const { return static_cast<std::size_t>(w1_.cols()); }
    std::size_t hidden() const { return static_cast<std::size_t>(w1_.rows()); }

    Eigen::VectorXd operator()(const Eigen::VectorXd& state) const;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& states) const;

    /// d(sum_j dq(:,j) . q(states(:,j)))/d(params), same order as tensors().
    std::vector<Eigen::MatrixXd> backward(const Eigen::MatrixXd& states, const Eigen::MatrixXd& dq) const;

    std::vector<Eigen::MatrixXd*> tensors();
    std::vector<const Eigen::MatrixXd*> tensors() const;
    std::vector<Eigen::MatrixXd> zeros_like() const;
    bool all_finite() const;
    bool same_shape(const QFunction& other) const;
    bool operator==(const QFunction& other) const;

private:
    Eigen::MatrixXd w1_, b1_, w2_, b2_, w3_, b3_;
};

// ---------------------------------------------------------------------------
// Learner

struct Transition {
    Eigen::VectorXd state;
    std::size_t action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool terminal = false;
};

/// Fixed-capacity ring; the oldest transition is evicted first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 50000);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_.at(i); }  // 0 = oldest
    /// Uniform sampling with replacement.
    std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

enum class OptimizerKind { Adam, Sgd };

struct LearnerConfig {
    double gamma = 0.95;
    double learning_rate = 1e-3;
    std::size_t buffer_capacity = 50000;
    std::size_t batch_size = 64;
    std::size_t target_sync_period = 1000;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::size_t epsilon_decay_steps = 100000;
    std::size_t hidden = 64;
    std::size_t train_every = 1;  // environment steps per gradient update
    std::size_t learning_starts = 64;
    double grad_clip = 10.0;  // global L2 norm, 0 disables
    OptimizerKind optimizer = OptimizerKind::Adam;
    StateMode state_mode = StateMode::Full;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const LearnerConfig&) const = default;
};

void to_json(nlohmann::json& j, const LearnerConfig& c);
void from_json(const nlohmann::json& j, LearnerConfig& c);

/// Linear decay from epsilon_start to epsilon_end over epsilon_decay_steps, then constant.
double epsilon_at(const LearnerConfig& cfg, std::size_t step);

/// Epsilon-greedy; greedy ties go to the lowest action index.
rewards::AgentAction select_action(const QFunction& q, const Eigen::VectorXd& state, double epsilon,
                                   std::mt19937_64& rng);

std::size_t greedy_action(const Eigen::VectorXd& q_values);

struct TdGradient {
    double loss = 0.0;  // mean of 0.5 * td_error^2
    std::vector<Eigen::MatrixXd> grads;
    double mean_q = 0.0;
};

/// Gradient of the batch-mean squared TD error with targets from `target`.
TdGradient td_gradient(const QFunction& q, const QFunction& target, std::span<const Transition> batch, double gamma);

/// Optimizer state for td_update.
class QOptimizer {
public:
    QOptimizer() = default;
    QOptimizer(const QFunction& q, const LearnerConfig& cfg);
    void step(QFunction& q, std::vector<Eigen::MatrixXd> grads);

private:
    OptimizerKind kind_ = OptimizerKind::Adam;
    double learning_rate_ = 1e-3;
    double grad_clip_ = 0.0;
    Adam adam_;
};

/// One gradient step on `batch`; throws AgentError if parameters become non-finite.
TdGradient td_update(QFunction& q, const QFunction& target, std::span<const Transition> batch, const LearnerConfig& cfg,
                     QOptimizer& optimizer);

/// target := q. Throws AgentError on shape mismatch.
void sync_target(const QFunction& q, QFunction& target);

struct MetricsRow {
    std::size_t step = 0;
    double epsilon = 0.0;
    double mean_q = 0.0;
    double episode_reward = 0.0;
};

/// Independent DQN learner for one prosumer.
class DqnLearner {
public:
    DqnLearner(std::size_t state_dim, const LearnerConfig& cfg);

    rewards::AgentAction act(const Eigen::VectorXd& state);         // exploring
    rewards::AgentAction act_greedy(const Eigen::VectorXd& state) const;
    /// Stores the transition, updates every train_every steps, syncs the target.
    void observe(Transition t);

    double epsilon() const { return epsilon_at(cfg_, steps_); }
    std::size_t steps() const { return steps_; }
    std::size_t updates() const { return updates_; }
    double last_mean_q() const { return last_mean_q_; }
    const QFunction& q() const { return q_; }
    const QFunction& target() const { return target_; }
    const LearnerConfig& config() const { return cfg_; }
    const ReplayBuffer& buffer() const { return buffer_; }

private:
    LearnerConfig cfg_;
    QFunction q_, target_;
    QOptimizer optimizer_;
    ReplayBuffer buffer_;
    std::mt19937_64 rng_;
    std::size_t steps_ = 0;
    std::size_t updates_ = 0;
    double last_mean_q_ = 0.0;
};

// ---------------------------------------------------------------------------
// Baseline

/// Balance within 0.1 kWh -> SelfConsumption; surplus charges below 90% SoC,
/// else sells; deficit discharges from 20% SoC, else buys (ChargeAndBuy at night).
rewards::AgentAction rule_based_policy(const rewards::AgentObservation& obs);

// ---------------------------------------------------------------------------
// Artifacts

struct PolicyCheckpoint {
    LearnerConfig config;
    std::size_t state_dim = 0;
    double energy_scale = 1.0;
    QFunction q;
};

void save_policy(const std::filesystem::path& path, const PolicyCheckpoint& policy);
PolicyCheckpoint load_policy(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

}  // namespace p2p::agents
