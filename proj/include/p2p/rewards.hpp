#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "p2p/forecast.hpp"

namespace p2p::rewards {

enum class TariffPeriod : std::uint8_t { N = 0, NP = 1, P = 2, D = 3 };

std::string to_string(TariffPeriod p);
TariffPeriod tariff_period_from_string(const std::string& s);

class CalendarError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Hour-of-day to tariff period plus grid prices. Immutable once validated.
struct TariffCalendar {
    std::array<TariffPeriod, 24> period_of_hour{};
    std::array<double, 4> lambda_buy_of_period{};  // indexed by TariffPeriod
    double lambda_sell = 0.0;

    double lambda_buy(TariffPeriod p) const { return lambda_buy_of_period[static_cast<std::size_t>(p)]; }
    double lambda_buy_at(int hour) const { return lambda_buy(period_of_hour.at(static_cast<std::size_t>(hour))); }

    /// N 00-06, D 07-14 and 22-23, NP 15-16, P 17-21; prices N .08, NP .12, D .15, P .28, feed-in .05.
    static TariffCalendar default_calendar();

    /// Throws CalendarError unless peak hours are contiguous, pre-peak hours
    /// immediately precede them and P > D >= NP >= N > feed-in.
    void validate() const;
};

TariffPeriod tariff_period(int hour, const TariffCalendar& calendar);

enum class AgentAction : std::uint8_t {
    ChargeAndBuy = 0,
    Buy = 1,
    Sell = 2,
    DischargeAndSell = 3,
    DischargeAndBuy = 4,
    SelfConsumption = 5,
    SelfAndCharge = 6,
    SelfAndDischarge = 7,
};

inline constexpr std::size_t kActionCount = 8;

std::string to_string(AgentAction a);
AgentAction action_from_index(std::size_t index);
inline std::size_t index_of(AgentAction a) { return static_cast<std::size_t>(a); }

struct AgentObservation {
    double load = 0.0;        // kWh this hour
    double generation = 0.0;  // kWh this hour
    double soc_pct = 0.0;     // [0, 100]
    int hour = 0;
    TariffPeriod tariff = TariffPeriod::N;
    std::optional<ForecastDistribution> forecast;
    double confidence = 0.0;    // alpha in [0, 1]
    double peak_deficit = 0.0;  // kWh
};

inline constexpr double kConfidenceEpsilon = 1e-6;

/// alpha = 1 / (1 + sigma / (|mu| + eps)).
double confidence_score(double mu, double sigma2);

/// Mean confidence over both targets and every horizon step.
double aggregate_confidence(const ForecastDistribution& forecast);

/// Sum of (mu_load - mu_pv) over horizon steps t+1.. that fall in peak hours.
double peak_deficit(const ForecastDistribution& forecast, int current_hour, const TariffCalendar& calendar);

/// Uncertainty-conditioned reward tables. Cases not covered by a table return 0.
double reward(AgentAction action, const AgentObservation& obs);

}  // namespace p2p::rewards
