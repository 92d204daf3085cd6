#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "p2p/forecast.hpp"
#include "p2p/ktu/model.hpp"
#include "p2p/profiles.hpp"

namespace p2p::forecasts {

/// Per-agent, per-hour forecasts for hours t+1..t+h, issued at hour t.
/// Hours outside [first_valid, last_valid] have none.
struct ForecastTable {
    std::size_t horizon = 0;
    std::vector<std::vector<std::optional<ForecastDistribution>>> by_agent;

    std::size_t agents() const { return by_agent.size(); }
    const std::optional<ForecastDistribution>& at(std::size_t agent, std::size_t hour) const;
    std::size_t first_valid() const;  // first hour with a forecast for every agent
    std::size_t end_valid() const;    // one past the last such hour
};

struct OracleOptions {
    std::size_t horizon = 3;
    double noise_fraction = 0.05;  // sigma relative to max(true, 5% of the series peak)
    double latitude_deg = profiles::kHelsinkiLatitude;
    std::uint64_t seed = 0;
};

/// True future values plus Gaussian noise of the stated sigma; PV is zero at night.
ForecastTable oracle_forecasts(std::span<const profiles::EnergyProfile> profiles, const OracleOptions& options);

/// Runs the KTU model on each agent's trailing window (features encoded with `stats`).
ForecastTable ktu_forecasts(const ktu::KtuParameters& params, std::span<const profiles::EnergyProfile> profiles,
                            std::span<const profiles::ProsumerSpec> specs, const profiles::NormStats& stats,
                            double latitude_deg = profiles::kHelsinkiLatitude);

}  // namespace p2p::forecasts
