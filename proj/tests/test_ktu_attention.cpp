#include <doctest.h>

#include <cmath>
#include <random>

#include "p2p/ktu/model.hpp"

using namespace p2p::ktu;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Straightforward loops over heads, query rows, key rows and channels.
Eigen::MatrixXd loop_attention(const AttentionWeights& w, const Eigen::MatrixXd& x, std::size_t heads) {
    const auto n = x.rows();
    const auto d = x.cols();
    const auto dk = d / static_cast<Eigen::Index>(heads);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, d), k = q, v = q;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index m = 0; m < d; ++m) {
                q(i, j) += x(i, m) * w.wq(m, j);
                k(i, j) += x(i, m) * w.wk(m, j);
                v(i, j) += x(i, m) * w.wv(m, j);
            }
    Eigen::MatrixXd concat = Eigen::MatrixXd::Zero(n, d);
    for (std::size_t h = 0; h < heads; ++h) {
        const auto off = static_cast<Eigen::Index>(h) * dk;
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> score(static_cast<std::size_t>(n));
            double mx = -1e300;
            for (Eigen::Index j = 0; j < n; ++j) {
                double s = 0.0;
                for (Eigen::Index c = 0; c < dk; ++c) s += q(i, off + c) * k(j, off + c);
                score[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dk));
                mx = std::max(mx, score[static_cast<std::size_t>(j)]);
            }
            double z = 0.0;
            for (double& s : score) z += (s = std::exp(s - mx));
            for (Eigen::Index j = 0; j < n; ++j)
                for (Eigen::Index c = 0; c < dk; ++c)
                    concat(i, off + c) += score[static_cast<std::size_t>(j)] / z * v(j, off + c);
        }
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index m = 0; m < d; ++m) out(i, j) += concat(i, m) * w.wo(m, j);
    return out;
}

KtuConfig small_config() {
    KtuConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.d_ff = 16;
    c.window = 6;
    return c;
}

Eigen::MatrixXd exo_of(const Eigen::VectorXd& flag, const Eigen::VectorXd& norm) {
    Eigen::MatrixXd e(flag.size(), 2);
    e.col(0) = flag;
    e.col(1) = norm;
    return e;
}

}  // namespace

TEST_CASE("attention with identity weights on one row returns the row") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
    const AttentionWeights w{id, id, id, id};
    Eigen::MatrixXd x(1, 4);
    x << 0.3, -1.2, 2.0, 0.7;
    const Eigen::MatrixXd out = multi_head_attention(w, x, 1);
    CHECK((out - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention matches the loop oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t heads : {1u, 2u, 4u}) {
            const AttentionWeights w{random_matrix(8, 8, rng, 0.5), random_matrix(8, 8, rng, 0.5),
                                     random_matrix(8, 8, rng, 0.5), random_matrix(8, 8, rng, 0.5)};
            const Eigen::MatrixXd x = random_matrix(3 + trial % 4, 8, rng);
            const Eigen::MatrixXd fast = multi_head_attention(w, x, heads);
            REQUIRE(fast.rows() == x.rows());
            REQUIRE(fast.cols() == x.cols());
            CHECK((fast - loop_attention(w, x, heads)).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("attention rejects a head count that does not divide the width") {
    std::mt19937_64 rng(1);
    const AttentionWeights w{random_matrix(6, 6, rng), random_matrix(6, 6, rng), random_matrix(6, 6, rng),
                             random_matrix(6, 6, rng)};
    CHECK_THROWS(multi_head_attention(w, random_matrix(3, 6, rng), 4));
    CHECK_THROWS(multi_head_attention(w, random_matrix(3, 5, rng), 1));
}

TEST_CASE("pv physics mask") {
    Eigen::VectorXd raw(3), flag(3), norm(3);
    raw << 5.0, 0.0, 3.0;
    flag << 0.0, 1.0, 1.0;
    norm << 0.8, 1.0, 0.5;
    const Eigen::VectorXd out = apply_pv_physics_mask(raw, flag, norm);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(0.5 * std::log1p(std::exp(3.0))).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(1.5243).epsilon(1e-4));
    CHECK(softplus(1000.0) == doctest::Approx(1000.0));
    CHECK(softplus(-1000.0) >= 0.0);
}

TEST_CASE("forward pass contracts") {
    const KtuConfig cfg = small_config();
    std::mt19937_64 rng(9);
    const KtuParameters params = KtuParameters::initialize(cfg, 3);
    const Eigen::MatrixXd x = random_matrix(6, cfg.feature_dim, rng);
    Eigen::VectorXd flag(3), norm(3);
    flag << 1, 1, 0;
    norm << 0.6, 0.6, 0.6;
    const Eigen::MatrixXd exo = exo_of(flag, norm);

    const ForwardResult a = forward(params, x, exo);
    const ForwardResult b = forward(params, x, exo);
    CHECK(a.distribution.mu_load == b.distribution.mu_load);
    CHECK(a.distribution.var_pv == b.distribution.var_pv);
    CHECK(a.distribution.mu_pv[2] == 0.0);
    CHECK(a.distribution.mu_pv[0] == doctest::Approx(0.6 * a.pv_pre_mask[0]));

    CHECK_THROWS_AS(forward(params, random_matrix(5, cfg.feature_dim, rng), exo), KtuError);
    CHECK_THROWS_AS(forward(params, random_matrix(6, cfg.feature_dim + 1, rng), exo), KtuError);
}

TEST_CASE("night mean is zero and variances stay positive for random parameters") {
    KtuConfig cfg = small_config();
    cfg.n_layers = 1;
    std::mt19937_64 rng(21);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        KtuParameters params(cfg);
        const double scale = trial % 2 == 0 ? 1.0 : 5.0;
        for (std::size_t i = 0; i < params.tensor_count(); ++i)
            params.tensor(i) = random_matrix(params.tensor(i).rows(), params.tensor(i).cols(), rng, scale);
        Eigen::VectorXd flag(3), norm(3);
        for (int k = 0; k < 3; ++k) {
            flag[k] = coin(rng) ? 1.0 : 0.0;
            norm[k] = u(rng);
        }
        const ForwardResult r = forward(params, random_matrix(6, cfg.feature_dim, rng, 2.0), exo_of(flag, norm));
        for (int k = 0; k < 3; ++k) {
            if (flag[k] == 0.0) REQUIRE(r.distribution.mu_pv[k] == 0.0);
            REQUIRE(r.distribution.mu_pv[k] >= 0.0);
            REQUIRE(r.distribution.var_load[k] >= cfg.epsilon_stab);
            REQUIRE(r.distribution.var_pv[k] >= cfg.epsilon_stab);
        }
    }
}

TEST_CASE("parameter layout") {
    const KtuConfig cfg = small_config();
    const KtuParameters p(cfg);
    CHECK(p["pos"].rows() == 6);
    CHECK(p["pos"].cols() == 8);
    CHECK(p.attention(1).wq.rows() == 8);
    CHECK_THROWS_AS(p["missing"], KtuError);
    const KtuParameters init = KtuParameters::initialize(cfg, 1);
    CHECK(init.all_finite());
    const KtuParameters init2 = KtuParameters::initialize(cfg, 1);
    for (std::size_t i = 0; i < init.tensor_count(); ++i) CHECK(init.tensor(i) == init2.tensor(i));

    KtuConfig bad = cfg;
    bad.n_heads = 3;
    CHECK_THROWS(bad.validate());
    CHECK_NOTHROW(KtuConfig::large_scale().validate());
    CHECK(KtuConfig::large_scale().d_model == 128);
    CHECK(KtuConfig::large_scale().d_ff == 512);
}
