#include <doctest.h>

#include <cmath>
#include <random>

#include "p2p/rewards.hpp"
#include "reward_cases.hpp"

using namespace p2p;
using namespace p2p::rewards;
using namespace p2p::test;

TEST_CASE("tariff calendar") {
    const TariffCalendar c = TariffCalendar::default_calendar();
    CHECK(tariff_period(18, c) == T::P);
    CHECK(tariff_period(3, c) == T::N);
    CHECK(tariff_period(15, c) == T::NP);
    CHECK(tariff_period(23, c) == T::D);
    CHECK_THROWS(tariff_period(24, c));
    CHECK_NOTHROW(c.validate());
    CHECK(c.lambda_buy_at(18) == 0.28);
    CHECK(c.lambda_sell == 0.05);

    TariffCalendar split = c;
    split.period_of_hour[12] = T::P;
    CHECK_THROWS_AS(split.validate(), CalendarError);
    TariffCalendar detached = c;
    detached.period_of_hour[10] = T::NP;
    CHECK_THROWS_AS(detached.validate(), CalendarError);
    TariffCalendar cheap_peak = c;
    cheap_peak.lambda_buy_of_period[static_cast<std::size_t>(T::P)] = 0.10;
    CHECK_THROWS_AS(cheap_peak.validate(), CalendarError);
    TariffCalendar high_feed_in = c;
    high_feed_in.lambda_sell = 0.09;
    CHECK_THROWS_AS(high_feed_in.validate(), CalendarError);

    for (const char* s : {"N", "NP", "P", "D"}) CHECK(to_string(tariff_period_from_string(s)) == s);
    CHECK_THROWS(tariff_period_from_string("X"));
}

TEST_CASE("confidence and peak deficit") {
    CHECK(confidence_score(3.0, 0.0) == 1.0);
    CHECK(confidence_score(2.0, 4.0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(confidence_score(0.0, 100.0) < 1e-6);

    ForecastDistribution f = ForecastDistribution::zeros(3);
    f.mu_load << 5.0, 1.0, 1.0;
    f.mu_pv << 2.0, 0.0, 0.0;
    const TariffCalendar c = TariffCalendar::default_calendar();
    CHECK(peak_deficit(f, 16, c) == doctest::Approx(3.0 + 1.0 + 1.0));
    CHECK(peak_deficit(f, 21, c) == 0.0);  // 22, 23, 0
    CHECK(peak_deficit(f, 2, c) == 0.0);
    CHECK(peak_deficit(f, 14, c) == doctest::Approx(1.0));  // only hour 17 is peak
    f.mu_pv << 6.0, 0.0, 0.0;
    CHECK(peak_deficit(f, 16, c) == doctest::Approx(-1.0 + 2.0));

    f.var_load.setZero();
    f.var_pv.setZero();
    f.mu_pv.setConstant(1.0);
    CHECK(aggregate_confidence(f) == 1.0);
}

TEST_CASE("golden reward cases") {
    REQUIRE(golden_cases().size() >= 25);
    for (const Golden& g : golden_cases()) {
        INFO(std::string(g.name));
        CHECK(reward(g.action, g.o) == doctest::Approx(g.expected).epsilon(1e-12));
    }
}

TEST_CASE("first match wins for overlapping charge-and-buy guards") {
    // Pre-peak with a deficit also satisfies the deficit guard; the first row wins.
    const AgentObservation o = obs(4, 1, 60, T::NP, 0.4, 2.0);
    CHECK(reward(A::ChargeAndBuy, o) == doctest::Approx(0.5 + 1.5 * 0.4 + 1.0));
    // Night with a deficit takes the night row.
    CHECK(reward(A::ChargeAndBuy, obs(4, 1, 60, T::N, 0.4)) == doctest::Approx(0.9));
}

TEST_CASE("reward properties over random observations") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> e(0.0, 5.0), soc(0.0, 100.0), a(0.0, 1.0), d(-5.0, 5.0);
    std::uniform_int_distribution<int> tariff(0, 3), action(0, 7);
    for (int i = 0; i < 100000; ++i) {
        AgentObservation o = obs(e(rng), e(rng), soc(rng), static_cast<T>(tariff(rng)), a(rng), d(rng));
        if (i % 10 == 0) o.generation = o.load + d(rng) * 0.05;
        const A act = action_from_index(static_cast<std::size_t>(action(rng)));
        const double r = reward(act, o);
        REQUIRE(std::isfinite(r));
        if (o.tariff == T::P && (act == A::ChargeAndBuy || act == A::SelfAndCharge)) REQUIRE(r == 0.0);

        AgentObservation more = o;
        more.confidence = std::min(1.0, o.confidence + a(rng) * (1.0 - o.confidence));
        REQUIRE(reward(act, more) >= r);
    }
}

TEST_CASE("action indices are stable") {
    CHECK(kActionCount == 8);
    const char* names[] = {"ChargeAndBuy", "Buy", "Sell", "DischargeAndSell", "DischargeAndBuy", "SelfConsumption",
                           "SelfAndCharge", "SelfAndDischarge"};
    for (std::size_t i = 0; i < kActionCount; ++i) {
        CHECK(to_string(action_from_index(i)) == names[i]);
        CHECK(index_of(action_from_index(i)) == i);
    }
    CHECK_THROWS(action_from_index(8));
}
