#include "p2p/rewards.hpp"

#include <algorithm>
#include <cmath>

namespace p2p::rewards {

std::string to_string(TariffPeriod p) {
    switch (p) {
        case TariffPeriod::N: return "N";
        case TariffPeriod::NP: return "NP";
        case TariffPeriod::P: return "P";
        case TariffPeriod::D: return "D";
    }
    return "N";
}

TariffPeriod tariff_period_from_string(const std::string& s) {
    if (s == "N") return TariffPeriod::N;
    if (s == "NP") return TariffPeriod::NP;
    if (s == "P") return TariffPeriod::P;
    if (s == "D") return TariffPeriod::D;
    throw CalendarError("unknown tariff period '" + s + "'");
}

TariffCalendar TariffCalendar::default_calendar() {
    TariffCalendar c;
    for (int h = 0; h < 24; ++h) {
        TariffPeriod p = TariffPeriod::D;
        if (h <= 6) p = TariffPeriod::N;
        else if (h >= 15 && h <= 16) p = TariffPeriod::NP;
        else if (h >= 17 && h <= 21) p = TariffPeriod::P;
        c.period_of_hour[static_cast<std::size_t>(h)] = p;
    }
    c.lambda_buy_of_period = {0.08, 0.12, 0.28, 0.15};
    c.lambda_sell = 0.05;
    return c;
}

void TariffCalendar::validate() const {
    auto at = [this](int h) { return period_of_hour[static_cast<std::size_t>((h % 24 + 24) % 24)]; };

    int peak_hours = 0, peak_runs = 0, pre_peak_hours = 0, first_peak = -1;
    for (int h = 0; h < 24; ++h) {
        if (at(h) == TariffPeriod::P) {
            ++peak_hours;
            if (at(h - 1) != TariffPeriod::P) {
                ++peak_runs;
                first_peak = h;
            }
        }
        if (at(h) == TariffPeriod::NP) ++pre_peak_hours;
    }
    if (peak_hours == 0) throw CalendarError("calendar has no peak hours");
    if (peak_hours < 24 && peak_runs != 1) throw CalendarError("peak hours must be contiguous");
    // Every NP hour must sit in the run immediately before the peak block.
    int run = 0;
    for (int h = first_peak - 1; at(h) == TariffPeriod::NP && run < 24; --h) ++run;
    if (run != pre_peak_hours) throw CalendarError("pre-peak hours must immediately precede peak hours");

    const double n = lambda_buy(TariffPeriod::N), np = lambda_buy(TariffPeriod::NP);
    const double p = lambda_buy(TariffPeriod::P), d = lambda_buy(TariffPeriod::D);
    if (!(p > d && d >= np && np >= n && n > lambda_sell))
        throw CalendarError("prices must satisfy P > D >= NP >= N > feed-in");
    if (!(lambda_sell > 0.0)) throw CalendarError("feed-in price must be positive");
}

TariffPeriod tariff_period(int hour, const TariffCalendar& calendar) {
    if (hour < 0 || hour > 23) throw std::out_of_range("hour must be in 0..23");
    return calendar.period_of_hour[static_cast<std::size_t>(hour)];
}

std::string to_string(AgentAction a) {
    switch (a) {
        case AgentAction::ChargeAndBuy: return "ChargeAndBuy";
        case AgentAction::Buy: return "Buy";
        case AgentAction::Sell: return "Sell";
        case AgentAction::DischargeAndSell: return "DischargeAndSell";
        case AgentAction::DischargeAndBuy: return "DischargeAndBuy";
        case AgentAction::SelfConsumption: return "SelfConsumption";
        case AgentAction::SelfAndCharge: return "SelfAndCharge";
        case AgentAction::SelfAndDischarge: return "SelfAndDischarge";
    }
    return "SelfConsumption";
}

AgentAction action_from_index(std::size_t index) {
    if (index >= kActionCount) throw std::out_of_range("action index out of range");
    return static_cast<AgentAction>(index);
}

double confidence_score(double mu, double sigma2) {
    const double sigma = std::sqrt(std::max(sigma2, 0.0));
    return 1.0 / (1.0 + sigma / (std::abs(mu) + kConfidenceEpsilon));
}

double aggregate_confidence(const ForecastDistribution& f) {
    const Eigen::Index h = f.horizon();
    if (h == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < h; ++k) {
        sum += confidence_score(f.mu_load[k], f.var_load[k]);
        sum += confidence_score(f.mu_pv[k], f.var_pv[k]);
    }
    return sum / static_cast<double>(2 * h);
}

double peak_deficit(const ForecastDistribution& f, int current_hour, const TariffCalendar& calendar) {
    double delta = 0.0;
    for (Eigen::Index k = 0; k < f.horizon(); ++k) {
        const int hour = (current_hour + static_cast<int>(k) + 1) % 24;
        if (tariff_period(hour, calendar) == TariffPeriod::P) delta += f.mu_load[k] - f.mu_pv[k];
    }
    return delta;
}

double reward(AgentAction action, const AgentObservation& obs) {
    const double soc = obs.soc_pct;
    const double alpha = obs.confidence;
    const TariffPeriod t = obs.tariff;
    const bool peak = t == TariffPeriod::P;
    const bool surplus = obs.generation > obs.load;
    const bool deficit = obs.generation < obs.load;
    const double imbalance = std::abs(obs.generation - obs.load);

    switch (action) {
        case AgentAction::ChargeAndBuy:
            // The peak suppression row is checked first so that it holds for every observation.
            if (peak) return 0.0;
            if (soc <= 90.0 && t == TariffPeriod::NP && obs.peak_deficit > 0.0) return 0.5 + 1.5 * alpha + 1.0;
            if (soc <= 90.0 && t == TariffPeriod::N) return 0.5 + alpha;
            if (soc <= 90.0 && deficit) return 0.5;
            return 0.0;

        case AgentAction::Buy:
            if (deficit && soc < 10.0) return peak ? 0.25 : 0.5;
            return 0.0;

        case AgentAction::Sell:
            if (surplus && soc >= 90.0) return peak ? 0.75 : 0.5;
            return 0.0;

        case AgentAction::DischargeAndSell:
            if (surplus && soc >= 20.0 && peak) return (0.5 + 0.5 * alpha) * 1.5;
            if (surplus && soc >= 90.0) return 0.5;
            return 0.0;

        case AgentAction::DischargeAndBuy:
            if (deficit && soc >= 10.0) return peak ? (0.5 + 0.5 * alpha) * 1.5 : 0.5;
            return 0.0;

        case AgentAction::SelfConsumption:
            if (imbalance <= 0.1) return peak ? 1.2 : 1.0;
            if (imbalance <= 0.2) return 0.5;
            return 0.0;

        case AgentAction::SelfAndCharge:
            if (peak) return 0.0;
            if (surplus && soc <= 90.0 && t == TariffPeriod::NP) return 0.5 + 2.0 * alpha + 1.0;
            if (surplus && soc <= 90.0) return 0.5 + 0.5 * alpha;
            return 0.0;

        case AgentAction::SelfAndDischarge:
            if (deficit && soc >= 20.0) return peak ? (0.5 + 0.5 * alpha) * 1.5 : 0.5;
            return 0.0;
    }
    return 0.0;
}

}  // namespace p2p::rewards
