#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "p2p/agents.hpp"
#include "p2p/binary_io.hpp"

using namespace p2p;
using namespace p2p::agents;
using rewards::AgentAction;
namespace fs = std::filesystem;

namespace {

env::BatteryState battery(double soc, double cap = 10.0) { return {soc, cap, 5.0, 5.0, 0.9}; }

Eigen::VectorXd random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = g(rng);
    return v;
}

std::vector<Transition> random_batch(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> a(0, 7);
    std::normal_distribution<double> r(0.0, 1.0);
    std::vector<Transition> b;
    for (std::size_t i = 0; i < n; ++i) b.push_back({random_vec(dim, rng), a(rng), r(rng), random_vec(dim, rng), i % 3 == 0});
    return b;
}

LearnerConfig sgd_config(double lr) {
    LearnerConfig c;
    c.optimizer = OptimizerKind::Sgd;
    c.learning_rate = lr;
    c.grad_clip = 0.0;
    c.gamma = 0.9;
    return c;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("p2p_agents_" + name); }

}  // namespace

TEST_CASE("state construction") {
    rewards::AgentObservation obs;
    ForecastDistribution zero = ForecastDistribution::zeros(3);
    zero.var_load.setConstant(4.0);
    zero.var_pv.setConstant(1.0);
    const Eigen::VectorXd s0 = build_state(obs, zero, battery(0.0), 1.0, StateMode::Full);
    REQUIRE(s0.size() == 7);
    for (int i = 0; i < 5; ++i) CHECK(s0[i] == 0.0);
    CHECK(s0[5] == doctest::Approx(2.0));
    CHECK(s0[6] == doctest::Approx(1.0));

    CHECK(build_state(obs, zero, battery(5.0), 1.0, StateMode::Full)[2] == doctest::Approx(0.5));

    ForecastDistribution f = ForecastDistribution::zeros(3);
    f.var_load << 1.0, 4.0, 9.0;
    f.mu_load << 1.0, 2.0, 6.0;
    obs.load = 4.0;
    obs.generation = 2.0;
    const Eigen::VectorXd s = build_state(obs, f, battery(2.0), 2.0, StateMode::Full);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(1.0));
    CHECK(s[3] == doctest::Approx(3.0 / 2.0));
    CHECK(s[5] == doctest::Approx(2.0 / 2.0));

    const Eigen::VectorXd free = build_state(obs, f, battery(2.0), 2.0, StateMode::ForecastFree);
    REQUIRE(free.size() == 7);
    CHECK(free.head(3) == s.head(3));
    CHECK(free.tail(4).isZero());
    CHECK(build_state(obs, std::nullopt, battery(2.0), 2.0, StateMode::ForecastFree).size() == 7);

    const Eigen::VectorXd flat = build_state(obs, f, battery(2.0), 1.0, StateMode::Flattened);
    REQUIRE(flat.size() == 15);
    CHECK(flat[5] == doctest::Approx(6.0));
    CHECK(flat[11] == doctest::Approx(3.0));
    CHECK(state_dim(StateMode::Flattened, 3) == 15);

    CHECK_THROWS_AS(build_state(obs, std::nullopt, battery(1.0), 1.0, StateMode::Full), AgentError);
    CHECK_THROWS_AS(build_state(obs, f, battery(1.0), 0.0, StateMode::Full), AgentError);
    for (auto m : {StateMode::Full, StateMode::ForecastFree, StateMode::Flattened})
        CHECK(state_mode_from_string(to_string(m)) == m);
    CHECK_THROWS(state_mode_from_string("other"));
}

TEST_CASE("action selection") {
    std::mt19937_64 rng(3);
    const QFunction q(4, 8, 1);
    const Eigen::VectorXd s = random_vec(4, rng);

    std::array<int, 8> counts{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[rewards::index_of(select_action(q, s, 1.0, rng))];
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - draws / 8.0) * (c - draws / 8.0) / (draws / 8.0);
    CHECK(chi2 < 18.475);  // 7 degrees of freedom, 1% level

    Eigen::VectorXd qv = Eigen::VectorXd::Zero(8);
    qv[3] = 5.0;
    CHECK(greedy_action(qv) == 3);
    CHECK(greedy_action(Eigen::VectorXd::Zero(8)) == 0);
    CHECK(greedy_action(Eigen::VectorXd::Constant(8, 2.0)) == 0);
    const AgentAction greedy = select_action(q, s, 0.0, rng);
    for (int i = 0; i < 50; ++i) CHECK(select_action(q, s, 0.0, rng) == greedy);
    CHECK_THROWS(select_action(q, s, 1.5, rng));
}

TEST_CASE("epsilon schedule") {
    LearnerConfig c;
    c.epsilon_start = 1.0;
    c.epsilon_end = 0.1;
    c.epsilon_decay_steps = 100;
    CHECK(epsilon_at(c, 0) == 1.0);
    CHECK(epsilon_at(c, 50) == doctest::Approx(0.55));
    CHECK(epsilon_at(c, 100) == 0.1);
    CHECK(epsilon_at(c, 1000) == 0.1);
    double prev = 2.0;
    for (std::size_t t = 0; t < 200; ++t) {
        CHECK(epsilon_at(c, t) <= prev);
        prev = epsilon_at(c, t);
    }
}

TEST_CASE("replay buffer") {
    ReplayBuffer buf(3);
    for (std::size_t i = 0; i < 5; ++i) buf.push({Eigen::VectorXd::Constant(1, double(i)), i, 0.0, {}, false});
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).action == 2);
    CHECK(buf.at(2).action == 4);
    std::mt19937_64 a(9), b(9);
    const auto sa = buf.sample(20, a);
    const auto sb = buf.sample(20, b);
    for (std::size_t i = 0; i < 20; ++i) CHECK(sa[i].action == sb[i].action);
    CHECK_THROWS(ReplayBuffer(0));
    CHECK_THROWS(ReplayBuffer(2).sample(1, a));
}

TEST_CASE("td gradient matches finite differences") {
    std::mt19937_64 rng(7);
    QFunction q(5, 6, 11);
    const QFunction target(5, 6, 12);
    for (std::size_t n : {1u, 8u}) {
        const auto batch = random_batch(n, 5, rng);
        const TdGradient g = td_gradient(q, target, batch, 0.9);
        const auto params = q.tensors();
        const double h = 1e-6;
        double worst = 0.0;
        for (std::size_t t = 0; t < params.size(); ++t) {
            for (Eigen::Index k = 0; k < params[t]->size(); ++k) {
                double& p = params[t]->data()[k];
                const double saved = p;
                p = saved + h;
                const double up = td_gradient(q, target, batch, 0.9).loss;
                p = saved - h;
                const double down = td_gradient(q, target, batch, 0.9).loss;
                p = saved;
                const double fd = (up - down) / (2 * h);
                const double an = g.grads[t].data()[k];
                worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("td update semantics") {
    std::mt19937_64 rng(13);
    QFunction q(3, 4, 1);
    const QFunction target(3, 4, 2);

    SUBCASE("sgd step follows the gradient") {
        const auto batch = random_batch(4, 3, rng);
        const LearnerConfig cfg = sgd_config(0.01);
        const QFunction before = q;
        const TdGradient g = td_gradient(q, target, batch, cfg.gamma);
        QOptimizer opt(q, cfg);
        td_update(q, target, batch, cfg, opt);
        const auto after = q.tensors();
        const auto old = before.tensors();
        for (std::size_t i = 0; i < after.size(); ++i)
            CHECK((*after[i] - (*old[i] - 0.01 * g.grads[i])).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("zero td error is a no-op") {
        Transition t{random_vec(3, rng), 2, 0.0, random_vec(3, rng), false};
        t.reward = q(t.state)[2] - 0.9 * target(t.next_state).maxCoeff();
        const std::vector<Transition> batch{t};
        const TdGradient g = td_gradient(q, target, batch, 0.9);
        CHECK(g.loss < 1e-20);
        for (const auto& m : g.grads) CHECK(m.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("gamma zero targets the reward") {
        Transition t{random_vec(3, rng), 5, 1.7, random_vec(3, rng), false};
        const std::vector<Transition> batch{t};
        const TdGradient g = td_gradient(q, target, batch, 0.0);
        const double delta = 1.7 - q(t.state)[5];
        CHECK(g.loss == doctest::Approx(0.5 * delta * delta));
    }
    SUBCASE("terminal transitions ignore the target network") {
        const Transition t{random_vec(3, rng), 1, 0.4, random_vec(3, rng), true};
        const std::vector<Transition> batch{t};
        const double delta = 0.4 - q(t.state)[1];
        CHECK(td_gradient(q, target, batch, 0.9).loss == doctest::Approx(0.5 * delta * delta));
    }
    SUBCASE("non-finite updates abort") {
        Transition t{random_vec(3, rng), 1, std::numeric_limits<double>::infinity(), random_vec(3, rng), true};
        const std::vector<Transition> batch{t};
        const LearnerConfig cfg = sgd_config(0.1);
        QOptimizer opt(q, cfg);
        CHECK_THROWS_AS(td_update(q, target, batch, cfg, opt), AgentError);
    }
    CHECK_THROWS_AS(td_gradient(q, target, std::vector<Transition>{}, 0.9), AgentError);
}

TEST_CASE("gradient clipping bounds the step") {
    std::mt19937_64 rng(17);
    QFunction q(3, 4, 1);
    const QFunction target(3, 4, 2);
    std::vector<Transition> batch = random_batch(4, 3, rng);
    for (auto& t : batch) t.reward = 1e4;
    LearnerConfig cfg = sgd_config(1.0);
    cfg.grad_clip = 0.5;
    const QFunction before = q;
    QOptimizer opt(q, cfg);
    td_update(q, target, batch, cfg, opt);
    double sq = 0.0;
    const auto a = q.tensors();
    const auto b = before.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) sq += (*a[i] - *b[i]).squaredNorm();
    CHECK(std::sqrt(sq) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("target sync") {
    std::mt19937_64 rng(19);
    QFunction q(3, 4, 1), target(3, 4, 2);
    sync_target(q, target);
    const Eigen::VectorXd s = random_vec(3, rng);
    CHECK(target(s) == q(s));
    const auto batch = random_batch(4, 3, rng);
    const LearnerConfig cfg = sgd_config(0.05);
    QOptimizer opt(q, cfg);
    const Eigen::VectorXd frozen = target(s);
    td_update(q, target, batch, cfg, opt);
    CHECK(target(s) == frozen);
    CHECK(q(s) != frozen);

    QFunction other(4, 4, 3);
    CHECK_THROWS_AS(sync_target(q, other), AgentError);
}

TEST_CASE("learner schedule and determinism") {
    LearnerConfig cfg;
    cfg.batch_size = 4;
    cfg.learning_starts = 10;
    cfg.train_every = 2;
    cfg.target_sync_period = 5;
    cfg.hidden = 8;
    cfg.seed = 4;
    auto run = [&cfg]() {
        DqnLearner l(3, cfg);
        std::mt19937_64 env(1);
        Eigen::VectorXd s = random_vec(3, env);
        for (int i = 0; i < 30; ++i) {
            const AgentAction a = l.act(s);
            Eigen::VectorXd next = random_vec(3, env);
            l.observe({s, rewards::index_of(a), 0.1 * i, next, false});
            s = next;
        }
        return l;
    };
    const DqnLearner a = run();
    const DqnLearner b = run();
    CHECK(a.q() == b.q());
    CHECK(a.steps() == 30);
    CHECK(a.updates() == 11);  // steps 10, 12, ..., 30
    CHECK(a.target() == a.q());  // step 30 is a sync step
    CHECK(a.buffer().size() == 30);
}

TEST_CASE("rule-based baseline") {
    rewards::AgentObservation o;
    o.load = 1.0;
    o.generation = 3.0;
    o.soc_pct = 50.0;
    CHECK(rule_based_policy(o) == AgentAction::SelfAndCharge);
    o.soc_pct = 95.0;
    CHECK(rule_based_policy(o) == AgentAction::Sell);
    o.generation = 0.0;
    o.load = 2.0;
    o.soc_pct = 50.0;
    CHECK(rule_based_policy(o) == AgentAction::SelfAndDischarge);
    o.soc_pct = 10.0;
    o.tariff = rewards::TariffPeriod::N;
    CHECK(rule_based_policy(o) == AgentAction::ChargeAndBuy);
    o.tariff = rewards::TariffPeriod::D;
    CHECK(rule_based_policy(o) == AgentAction::Buy);
    o.tariff = rewards::TariffPeriod::P;
    CHECK(rule_based_policy(o) == AgentAction::Buy);
    o.generation = 1.95;
    CHECK(rule_based_policy(o) == AgentAction::SelfConsumption);
}

TEST_CASE("learner config json and validation") {
    LearnerConfig c;
    c.optimizer = OptimizerKind::Sgd;
    c.state_mode = StateMode::Flattened;
    c.gamma = 0.5;
    const nlohmann::json j = c;
    CHECK(j.get<LearnerConfig>() == c);
    LearnerConfig bad = c;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), AgentError);
    bad = c;
    bad.epsilon_end = 0.9;
    bad.epsilon_start = 0.5;
    CHECK_THROWS_AS(bad.validate(), AgentError);
}

TEST_CASE("policy checkpoint and metrics artifacts") {
    PolicyCheckpoint p;
    p.config.seed = 77;
    p.config.hidden = 16;
    p.state_dim = 7;
    p.energy_scale = 3.5;
    p.q = QFunction(7, 16, 5);
    const fs::path path = temp_file("policy.dqn");
    save_policy(path, p);
    const PolicyCheckpoint back = load_policy(path);
    CHECK(back.config == p.config);
    CHECK(back.state_dim == 7);
    CHECK(back.energy_scale == 3.5);
    CHECK(back.q == p.q);

    std::ofstream(path, std::ios::binary) << "DQN1garbage";
    CHECK_THROWS_AS(load_policy(path), CheckpointError);

    const std::vector<MetricsRow> rows{{1, 0.9, 0.25, 0.0}, {2, 0.8, 0.5, 3.0}};
    write_metrics_csv(path, rows);
    std::ifstream in(path);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "step,epsilon,mean_q,episode_reward");
    CHECK(first == "1,0.9,0.25,0");
    fs::remove(path);
}
