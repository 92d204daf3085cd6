#include "p2p/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "p2p/binary_io.hpp"

namespace p2p::agents {

using rewards::AgentAction;

std::string to_string(StateMode m) {
    switch (m) {
        case StateMode::Full: return "full";
        case StateMode::ForecastFree: return "forecast_free";
        case StateMode::Flattened: return "flattened";
    }
    return "full";
}

StateMode state_mode_from_string(const std::string& s) {
    if (s == "full") return StateMode::Full;
    if (s == "forecast_free") return StateMode::ForecastFree;
    if (s == "flattened") return StateMode::Flattened;
    throw AgentError("unknown state mode '" + s + "'");
}

std::size_t state_dim(StateMode mode, std::size_t horizon) {
    return mode == StateMode::Flattened ? 3 + 4 * horizon : kStateDim;
}

Eigen::VectorXd build_state(const rewards::AgentObservation& obs, const std::optional<ForecastDistribution>& forecast,
                            const env::BatteryState& battery, double energy_scale, StateMode mode) {
    if (!(energy_scale > 0.0)) throw AgentError("energy scale must be positive");
    const bool uses_forecast = mode != StateMode::ForecastFree;
    if (uses_forecast && !forecast) throw AgentError("no forecast available for the current step");
    if (forecast && forecast->horizon() == 0) throw AgentError("empty forecast");

    const double inv = 1.0 / energy_scale;
    const std::size_t h = forecast ? static_cast<std::size_t>(forecast->horizon()) : 3;
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state_dim(mode, h)));
    s[0] = obs.load * inv;
    s[1] = obs.generation * inv;
    s[2] = battery.soc_fraction();
    if (!uses_forecast) return s;

    const ForecastDistribution& f = *forecast;
    const Eigen::VectorXd sd_load = f.var_load.cwiseMax(0.0).cwiseSqrt();
    const Eigen::VectorXd sd_pv = f.var_pv.cwiseMax(0.0).cwiseSqrt();
    if (mode == StateMode::Full) {
        s[3] = f.mu_load.mean() * inv;
        s[4] = f.mu_pv.mean() * inv;
        s[5] = sd_load.mean() * inv;
        s[6] = sd_pv.mean() * inv;
    } else {
        const auto n = static_cast<Eigen::Index>(h);
        s.segment(3, n) = f.mu_load * inv;
        s.segment(3 + n, n) = f.mu_pv * inv;
        s.segment(3 + 2 * n, n) = sd_load * inv;
        s.segment(3 + 3 * n, n) = sd_pv * inv;
    }
    if (!s.allFinite()) throw AgentError("state vector has non-finite components");
    return s;
}

// ---------------------------------------------------------------------------

QFunction::QFunction(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
    if (input_dim == 0 || hidden == 0) throw AgentError("Q-network dimensions must be positive");
    std::mt19937_64 rng(seed);
    auto init = [&rng](Eigen::Index rows, Eigen::Index cols) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-limit, limit);
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
        return m;
    };
    const auto in = static_cast<Eigen::Index>(input_dim);
    const auto hid = static_cast<Eigen::Index>(hidden);
    const auto out = static_cast<Eigen::Index>(rewards::kActionCount);
    w1_ = init(hid, in);
    b1_ = Eigen::MatrixXd::Zero(hid, 1);
    w2_ = init(hid, hid);
    b2_ = Eigen::MatrixXd::Zero(hid, 1);
    w3_ = init(out, hid);
    b3_ = Eigen::MatrixXd::Zero(out, 1);
}

Eigen::MatrixXd QFunction::forward(const Eigen::MatrixXd& states) const {
    if (states.rows() != w1_.cols()) throw AgentError("state dimension does not match the Q-network");
    const Eigen::MatrixXd h1 = ((w1_ * states).colwise() + b1_.col(0)).cwiseMax(0.0);
    const Eigen::MatrixXd h2 = ((w2_ * h1).colwise() + b2_.col(0)).cwiseMax(0.0);
    return (w3_ * h2).colwise() + b3_.col(0);
}

Eigen::VectorXd QFunction::operator()(const Eigen::VectorXd& state) const { return forward(state); }

std::vector<Eigen::MatrixXd> QFunction::backward(const Eigen::MatrixXd& states, const Eigen::MatrixXd& dq) const {
    const Eigen::MatrixXd z1 = (w1_ * states).colwise() + b1_.col(0);
    const Eigen::MatrixXd h1 = z1.cwiseMax(0.0);
    const Eigen::MatrixXd z2 = (w2_ * h1).colwise() + b2_.col(0);
    const Eigen::MatrixXd h2 = z2.cwiseMax(0.0);

    const Eigen::MatrixXd dh2 = w3_.transpose() * dq;
    const Eigen::MatrixXd dz2 = dh2.array() * (z2.array() > 0.0).cast<double>();
    const Eigen::MatrixXd dh1 = w2_.transpose() * dz2;
    const Eigen::MatrixXd dz1 = dh1.array() * (z1.array() > 0.0).cast<double>();

    return {dz1 * states.transpose(), dz1.rowwise().sum(), dz2 * h1.transpose(),
            dz2.rowwise().sum(),      dq * h2.transpose(), dq.rowwise().sum()};
}

std::vector<Eigen::MatrixXd*> QFunction::tensors() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}; }

std::vector<const Eigen::MatrixXd*> QFunction::tensors() const { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}; }

std::vector<Eigen::MatrixXd> QFunction::zeros_like() const {
    std::vector<Eigen::MatrixXd> z;
    for (const auto* t : tensors()) z.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
    return z;
}

bool QFunction::all_finite() const {
    return std::ranges::all_of(tensors(), [](const Eigen::MatrixXd* t) { return t->allFinite(); });
}

bool QFunction::same_shape(const QFunction& other) const {
    const auto a = tensors();
    const auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols()) return false;
    return true;
}

bool QFunction::operator==(const QFunction& other) const {
    if (!same_shape(other)) return false;
    const auto a = tensors();
    const auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (*a[i] != *b[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw AgentError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
    if (items_.empty()) throw AgentError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(items_[pick(rng)]);
    return out;
}

void LearnerConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw AgentError("gamma must be in [0, 1)");
    if (!(learning_rate >= 0.0)) throw AgentError("learning_rate must be non-negative");
    if (buffer_capacity == 0) throw AgentError("buffer_capacity must be positive");
    if (batch_size == 0) throw AgentError("batch_size must be positive");
    if (target_sync_period == 0) throw AgentError("target_sync_period must be positive");
    if (hidden == 0) throw AgentError("hidden must be positive");
    if (train_every == 0) throw AgentError("train_every must be positive");
    if (!(epsilon_end >= 0.0 && epsilon_start <= 1.0 && epsilon_end <= epsilon_start))
        throw AgentError("epsilon schedule must satisfy 0 <= epsilon_end <= epsilon_start <= 1");
    if (!(grad_clip >= 0.0)) throw AgentError("grad_clip must be non-negative");
}

void to_json(nlohmann::json& j, const LearnerConfig& c) {
    j = nlohmann::json{{"gamma", c.gamma},
                       {"learning_rate", c.learning_rate},
                       {"buffer_capacity", c.buffer_capacity},
                       {"batch_size", c.batch_size},
                       {"target_sync_period", c.target_sync_period},
                       {"epsilon_start", c.epsilon_start},
                       {"epsilon_end", c.epsilon_end},
                       {"epsilon_decay_steps", c.epsilon_decay_steps},
                       {"hidden", c.hidden},
                       {"train_every", c.train_every},
                       {"learning_starts", c.learning_starts},
                       {"grad_clip", c.grad_clip},
                       {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                       {"state_mode", to_string(c.state_mode)},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LearnerConfig& c) {
    LearnerConfig d;
    c.gamma = j.value("gamma", d.gamma);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.target_sync_period = j.value("target_sync_period", d.target_sync_period);
    c.epsilon_start = j.value("epsilon_start", d.epsilon_start);
    c.epsilon_end = j.value("epsilon_end", d.epsilon_end);
    c.epsilon_decay_steps = j.value("epsilon_decay_steps", d.epsilon_decay_steps);
    c.hidden = j.value("hidden", d.hidden);
    c.train_every = j.value("train_every", d.train_every);
    c.learning_starts = j.value("learning_starts", d.learning_starts);
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    const std::string opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") c.optimizer = OptimizerKind::Adam;
    else if (opt == "sgd") c.optimizer = OptimizerKind::Sgd;
    else throw AgentError("unknown optimizer '" + opt + "'");
    c.state_mode = state_mode_from_string(j.value("state_mode", to_string(d.state_mode)));
    c.seed = j.value("seed", d.seed);
}

double epsilon_at(const LearnerConfig& cfg, std::size_t step) {
    if (cfg.epsilon_decay_steps == 0 || step >= cfg.epsilon_decay_steps) return cfg.epsilon_end;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.epsilon_decay_steps);
    return std::max(cfg.epsilon_end, cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start));
}

std::size_t greedy_action(const Eigen::VectorXd& q_values) {
    std::size_t best = 0;
    for (Eigen::Index a = 1; a < q_values.size(); ++a)
        if (q_values[a] > q_values[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(a);
    return best;
}

AgentAction select_action(const QFunction& q, const Eigen::VectorXd& state, double epsilon, std::mt19937_64& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw AgentError("epsilon must be in [0, 1]");
    if (epsilon > 0.0) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < epsilon) {
            std::uniform_int_distribution<std::size_t> pick(0, rewards::kActionCount - 1);
            return rewards::action_from_index(pick(rng));
        }
    }
    return rewards::action_from_index(greedy_action(q(state)));
}

TdGradient td_gradient(const QFunction& q, const QFunction& target, std::span<const Transition> batch, double gamma) {
    if (batch.empty()) throw AgentError("td_update needs a non-empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto d = static_cast<Eigen::Index>(q.input_dim());
    Eigen::MatrixXd s(d, n), s_next(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = batch[static_cast<std::size_t>(j)];
        if (t.action >= rewards::kActionCount) throw AgentError("transition action out of range");
        s.col(j) = t.state;
        s_next.col(j) = t.next_state;
    }
    const Eigen::MatrixXd q_now = q.forward(s);
    const Eigen::MatrixXd q_next = target.forward(s_next);

    TdGradient out;
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(q_now.rows(), n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = batch[static_cast<std::size_t>(j)];
        const double y = t.terminal ? t.reward : t.reward + gamma * q_next.col(j).maxCoeff();
        const auto a = static_cast<Eigen::Index>(t.action);
        const double delta = y - q_now(a, j);
        out.loss += 0.5 * delta * delta * inv_n;
        dq(a, j) = -delta * inv_n;
        out.mean_q += q_now.col(j).maxCoeff() * inv_n;
    }
    out.grads = q.backward(s, dq);
    return out;
}

QOptimizer::QOptimizer(const QFunction& q, const LearnerConfig& cfg)
    : kind_(cfg.optimizer), learning_rate_(cfg.learning_rate), grad_clip_(cfg.grad_clip),
      adam_(q.zeros_like(), {.learning_rate = cfg.learning_rate}) {}

void QOptimizer::step(QFunction& q, std::vector<Eigen::MatrixXd> grads) {
    if (grad_clip_ > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > grad_clip_)
            for (auto& g : grads) g *= grad_clip_ / norm;
    }
    const auto params = q.tensors();
    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= learning_rate_ * grads[i];
    } else {
        adam_.step([&params](std::size_t i) -> Eigen::MatrixXd& { return *params[i]; }, grads);
    }
}

TdGradient td_update(QFunction& q, const QFunction& target, std::span<const Transition> batch, const LearnerConfig& cfg,
                     QOptimizer& optimizer) {
    TdGradient g = td_gradient(q, target, batch, cfg.gamma);
    optimizer.step(q, g.grads);
    if (!q.all_finite()) throw AgentError("Q-network parameters became non-finite (TD loss " + std::to_string(g.loss) + ")");
    return g;
}

void sync_target(const QFunction& q, QFunction& target) {
    if (target.input_dim() != 0 && !q.same_shape(target))
        throw AgentError("target network shape differs from the online network");
    target = q;
}

DqnLearner::DqnLearner(std::size_t state_dim, const LearnerConfig& cfg)
    : cfg_(cfg), q_(state_dim, cfg.hidden, cfg.seed), target_(q_), optimizer_(q_, cfg), buffer_(cfg.buffer_capacity),
      rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.validate();
}

AgentAction DqnLearner::act(const Eigen::VectorXd& state) { return select_action(q_, state, epsilon(), rng_); }

AgentAction DqnLearner::act_greedy(const Eigen::VectorXd& state) const {
    return rewards::action_from_index(greedy_action(q_(state)));
}

void DqnLearner::observe(Transition t) {
    buffer_.push(std::move(t));
    ++steps_;
    if (buffer_.size() >= std::max(cfg_.learning_starts, std::size_t{1}) && steps_ % cfg_.train_every == 0) {
        const std::vector<Transition> batch = buffer_.sample(cfg_.batch_size, rng_);
        last_mean_q_ = td_update(q_, target_, batch, cfg_, optimizer_).mean_q;
        ++updates_;
    }
    if (steps_ % cfg_.target_sync_period == 0) sync_target(q_, target_);
}

// ---------------------------------------------------------------------------

AgentAction rule_based_policy(const rewards::AgentObservation& obs) {
    const double e = obs.generation - obs.load;
    if (std::abs(e) <= 0.1) return AgentAction::SelfConsumption;
    if (e > 0.0) return obs.soc_pct < 90.0 ? AgentAction::SelfAndCharge : AgentAction::Sell;
    if (obs.soc_pct >= 20.0) return AgentAction::SelfAndDischarge;
    return obs.tariff == rewards::TariffPeriod::N ? AgentAction::ChargeAndBuy : AgentAction::Buy;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kPolicyMagic[5] = "DQN1";
constexpr std::uint32_t kPolicyVersion = 1;
}  // namespace

void save_policy(const std::filesystem::path& path, const PolicyCheckpoint& policy) {
    BinaryWriter w(path);
    write_header(w, kPolicyMagic, kPolicyVersion);
    nlohmann::json meta{{"learner", policy.config}, {"state_dim", policy.state_dim}, {"energy_scale", policy.energy_scale}};
    w.str(meta.dump());
    const auto t = policy.q.tensors();
    w.u64(t.size());
    for (const auto* m : t) w.matrix(*m);
    w.close();
}

PolicyCheckpoint load_policy(const std::filesystem::path& path) {
    BinaryReader r(path);
    read_header(r, kPolicyMagic, kPolicyVersion);
    PolicyCheckpoint p;
    try {
        const nlohmann::json meta = nlohmann::json::parse(r.str());
        p.config = meta.at("learner").get<LearnerConfig>();
        p.state_dim = meta.at("state_dim").get<std::size_t>();
        p.energy_scale = meta.at("energy_scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt policy metadata in '" + path.string() + "': " + e.what());
    }
    p.q = QFunction(p.state_dim, p.config.hidden, 0);
    auto t = p.q.tensors();
    if (r.u64() != t.size()) throw CheckpointError("tensor count mismatch in '" + path.string() + "'");
    for (auto* m : t) {
        Eigen::MatrixXd v = r.matrix();
        if (v.rows() != m->rows() || v.cols() != m->cols())
            throw CheckpointError("Q-network shape mismatch in '" + path.string() + "'");
        *m = std::move(v);
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes in '" + path.string() + "'");
    return p;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
    std::ofstream out(path);
    if (!out) throw AgentError("cannot write metrics '" + path.string() + "'");
    out << "step,epsilon,mean_q,episode_reward\n" << std::setprecision(10);
    for (const auto& r : rows) out << r.step << ',' << r.epsilon << ',' << r.mean_q << ',' << r.episode_reward << '\n';
}

}  // namespace p2p::agents
