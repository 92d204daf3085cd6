#include <doctest.h>

#include <cmath>
#include <random>

#include "p2p/ktu/loss.hpp"
#include "p2p/ktu/train.hpp"

using namespace p2p;
using namespace p2p::ktu;

namespace {

ForecastDistribution constant_dist(double mu, double var, Eigen::Index h = 3) {
    return {Eigen::VectorXd::Constant(h, mu), Eigen::VectorXd::Constant(h, var), Eigen::VectorXd::Constant(h, mu),
            Eigen::VectorXd::Constant(h, var)};
}

struct Batch {
    std::vector<ForecastDistribution> pred;
    std::vector<Eigen::VectorXd> pre, day;
    std::vector<Eigen::MatrixXd> y;
};

Batch random_batch(std::mt19937_64& rng, std::size_t n, Eigen::Index h) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> pos(0.1, 3.0);
    std::bernoulli_distribution coin(0.5);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        ForecastDistribution d = ForecastDistribution::zeros(h);
        Eigen::VectorXd pre(h), day(h);
        Eigen::MatrixXd y(h, 2);
        for (Eigen::Index k = 0; k < h; ++k) {
            d.mu_load[k] = g(rng);
            d.var_load[k] = pos(rng);
            pre[k] = pos(rng);
            day[k] = coin(rng) ? 1.0 : 0.0;
            d.mu_pv[k] = pre[k] * day[k];
            d.var_pv[k] = pos(rng);
            y(k, 0) = g(rng);
            y(k, 1) = std::abs(g(rng));
        }
        b.pred.push_back(d);
        b.pre.push_back(pre);
        b.day.push_back(day);
        b.y.push_back(y);
    }
    return b;
}

profiles::WindowedDataset random_dataset(const KtuConfig& cfg, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution coin(0.6);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    profiles::WindowedDataset ds;
    ds.window = cfg.window;
    ds.horizon = cfg.horizon;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd x(cfg.window, cfg.feature_dim), y(cfg.horizon, 2), e(cfg.horizon, 2);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(rng);
        for (std::size_t k = 0; k < cfg.horizon; ++k) {
            e(k, 0) = coin(rng) ? 1.0 : 0.0;
            e(k, 1) = u(rng);
            y(k, 0) = 1.0 + 0.5 * g(rng);
            y(k, 1) = e(k, 0) * std::abs(g(rng));
        }
        ds.inputs.push_back(x);
        ds.targets.push_back(y);
        ds.exo.push_back(e);
        ds.train.push_back(i);
    }
    return ds;
}

}  // namespace

TEST_CASE("loss examples") {
    const LossWeights w{0.01, 0.1, 1e-6};
    const std::vector<ForecastDistribution> pred{constant_dist(2.0, 1.0)};
    const std::vector<Eigen::VectorXd> pre{Eigen::VectorXd::Constant(3, 2.0)};
    const std::vector<Eigen::VectorXd> day{Eigen::VectorXd::Ones(3)};
    const std::vector<Eigen::MatrixXd> y{Eigen::MatrixXd::Constant(3, 2, 2.0)};
    const LossBreakdown b = composite_loss(pred, pre, y, day, w);
    CHECK(b.nll / 6.0 == doctest::Approx(0.5 * std::log(1.0 + 1e-6)).epsilon(1e-9));
    CHECK(b.nll / 6.0 == doctest::Approx(5e-7).epsilon(1e-3));
    CHECK(b.smoothness == 0.0);
    CHECK(b.night_pv_penalty == 0.0);

    // One night step with pre-mask mean ln 2 and beta 2.
    const LossWeights w2{0.0, 2.0, 1e-6};
    Eigen::VectorXd pre2 = Eigen::VectorXd::Zero(3);
    pre2[1] = std::log(2.0);
    Eigen::VectorXd day2 = Eigen::VectorXd::Ones(3);
    day2[1] = 0.0;
    const std::vector<Eigen::VectorXd> pres{pre2}, days{day2};
    const LossBreakdown c = composite_loss(pred, pres, y, days, w2);
    CHECK(c.total - c.nll == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(c.total - c.nll == doctest::Approx(1.386).epsilon(1e-3));

    std::vector<ForecastDistribution> bad{constant_dist(0.0, 0.0)};
    CHECK_THROWS_AS(composite_loss(bad, pre, y, day, w), KtuError);
    CHECK_THROWS_AS(composite_loss(std::vector<ForecastDistribution>{}, pre, y, day, w), KtuError);
}

TEST_CASE("smoothness is the total variation of both mean series") {
    ForecastDistribution d = constant_dist(0.0, 1.0);
    d.mu_load << 1.0, 3.0, 2.0;
    d.mu_pv << 0.0, 0.5, 0.5;
    const std::vector<ForecastDistribution> pred{d};
    const std::vector<Eigen::VectorXd> pre{d.mu_pv}, day{Eigen::VectorXd::Ones(3)};
    const std::vector<Eigen::MatrixXd> y{Eigen::MatrixXd::Zero(3, 2)};
    CHECK(composite_loss(pred, pre, y, day, {}).smoothness == doctest::Approx(3.0 + 0.5));
}

TEST_CASE("loss decomposition holds on random batches") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        const Batch b = random_batch(rng, 1 + trial % 7, 3);
        const LossWeights w{u(rng), u(rng), 1e-6};
        const LossBreakdown l = composite_loss(b.pred, b.pre, b.y, b.day, w);
        REQUIRE(std::isfinite(l.total));
        CHECK(l.total == doctest::Approx(l.nll + w.alpha_smooth * l.smoothness + w.beta_night * l.night_pv_penalty)
                             .epsilon(1e-12));
    }
}

TEST_CASE("loss gradients with respect to head outputs") {
    std::mt19937_64 rng(23);
    const Batch b = random_batch(rng, 3, 3);
    const LossWeights w{0.3, 0.7, 1e-6};
    std::vector<SampleLossGradient> g;
    composite_loss(b.pred, b.pre, b.y, b.day, w, &g);

    auto total_with = [&](auto mutate) {
        Batch c = b;
        mutate(c);
        return composite_loss(c.pred, c.pre, c.y, c.day, w).total;
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < 3; ++i) {
        for (Eigen::Index k = 0; k < 3; ++k) {
            const double fd_mu = (total_with([&](Batch& c) { c.pred[i].mu_load[k] += h; }) -
                                  total_with([&](Batch& c) { c.pred[i].mu_load[k] -= h; })) / (2 * h);
            CHECK(g[i].mu_load[k] == doctest::Approx(fd_mu).epsilon(1e-5));
            const double fd_var = (total_with([&](Batch& c) { c.pred[i].var_pv[k] += h; }) -
                                   total_with([&](Batch& c) { c.pred[i].var_pv[k] -= h; })) / (2 * h);
            CHECK(g[i].var_pv[k] == doctest::Approx(fd_var).epsilon(1e-5));
            const double fd_pre = (total_with([&](Batch& c) { c.pre[i][k] += h; }) -
                                   total_with([&](Batch& c) { c.pre[i][k] -= h; })) / (2 * h);
            CHECK(g[i].pv_pre_mask[k] == doctest::Approx(fd_pre).epsilon(1e-5));
        }
    }
}

TEST_CASE("model gradients match central finite differences") {
    KtuConfig cfg;
    cfg.d_model = 4;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.d_ff = 8;
    cfg.window = 5;
    cfg.alpha_smooth = 0.05;
    cfg.beta_night = 0.3;
    std::mt19937_64 rng(31);
    const profiles::WindowedDataset ds = random_dataset(cfg, 4, rng);
    KtuParameters params = KtuParameters::initialize(cfg, 7);
    // Move gains and biases off their initial values so every path is exercised.
    std::normal_distribution<double> g(0.0, 0.1);
    for (std::size_t i = 0; i < params.tensor_count(); ++i)
        for (Eigen::Index k = 0; k < params.tensor(i).size(); ++k) params.tensor(i).data()[k] += g(rng);

    const std::vector<std::size_t> idx{0, 1, 2, 3};
    std::vector<Eigen::MatrixXd> grads = params.zeros_like();
    loss_and_gradient(params, ds, idx, Mode::Eval, nullptr, &grads);

    const double step = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t t = 0; t < params.tensor_count(); ++t) {
        for (Eigen::Index k = 0; k < params.tensor(t).size(); ++k) {
            double& p = params.tensor(t).data()[k];
            const double saved = p;
            p = saved + step;
            const double up = loss_and_gradient(params, ds, idx, Mode::Eval, nullptr, nullptr).total;
            p = saved - step;
            const double down = loss_and_gradient(params, ds, idx, Mode::Eval, nullptr, nullptr).total;
            p = saved;
            const double fd = (up - down) / (2 * step);
            const double an = grads[t].data()[k];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
            ++checked;
            if (rel >= 1e-4) MESSAGE(params.name(t) << "[" << k << "] analytic " << an << " numeric " << fd);
        }
    }
    CHECK(checked == params.scalar_count());
    CHECK(worst < 1e-4);
}
