#include "p2p/forecasts.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace p2p::forecasts {

using profiles::EnergyProfile;

const std::optional<ForecastDistribution>& ForecastTable::at(std::size_t agent, std::size_t hour) const {
    static const std::optional<ForecastDistribution> none;
    if (agent >= by_agent.size() || hour >= by_agent[agent].size()) return none;
    return by_agent[agent][hour];
}

std::size_t ForecastTable::first_valid() const {
    std::size_t first = 0;
    for (const auto& series : by_agent) {
        std::size_t t = 0;
        while (t < series.size() && !series[t]) ++t;
        first = std::max(first, t);
    }
    return first;
}

std::size_t ForecastTable::end_valid() const {
    if (by_agent.empty()) return 0;
    std::size_t end = by_agent.front().size();
    for (const auto& series : by_agent) {
        std::size_t t = series.size();
        while (t > 0 && !series[t - 1]) --t;
        end = std::min(end, t);
    }
    return end;
}

ForecastTable oracle_forecasts(std::span<const EnergyProfile> profiles, const OracleOptions& options) {
    if (options.horizon == 0) throw std::invalid_argument("forecast horizon must be positive");
    if (!(options.noise_fraction >= 0.0)) throw std::invalid_argument("noise fraction must be non-negative");
    ForecastTable table;
    table.horizon = options.horizon;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto h = static_cast<Eigen::Index>(options.horizon);

    for (const EnergyProfile& p : profiles) {
        const double load_peak = p.load.empty() ? 0.0 : *std::ranges::max_element(p.load);
        const double pv_peak = p.generation.empty() ? 0.0 : *std::ranges::max_element(p.generation);
        auto sigma_of = [&](double truth, double peak) {
            return options.noise_fraction * std::max(truth, std::max(0.05 * peak, 1e-3));
        };
        std::vector<std::optional<ForecastDistribution>> series(p.size());
        for (std::size_t t = 0; t + options.horizon < p.size(); ++t) {
            ForecastDistribution f = ForecastDistribution::zeros(h);
            for (Eigen::Index k = 0; k < h; ++k) {
                const std::size_t u = t + static_cast<std::size_t>(k) + 1;
                const auto ts = p.timestamp(u);
                const bool day = profiles::daylight_flag(options.latitude_deg, profiles::day_of_year(ts),
                                                         profiles::hour_of_day(ts)) == 1;
                const double sl = sigma_of(p.load[u], load_peak);
                const double sp = sigma_of(p.generation[u], pv_peak);
                f.mu_load[k] = std::max(0.0, p.load[u] + sl * normal(rng));
                f.var_load[k] = sl * sl;
                const double pv = std::max(0.0, p.generation[u] + sp * normal(rng));
                f.mu_pv[k] = day ? pv : 0.0;
                f.var_pv[k] = sp * sp;
            }
            series[t] = std::move(f);
        }
        table.by_agent.push_back(std::move(series));
    }
    return table;
}

ForecastTable ktu_forecasts(const ktu::KtuParameters& params, std::span<const EnergyProfile> profiles,
                            std::span<const profiles::ProsumerSpec> specs, const profiles::NormStats& stats,
                            double latitude_deg) {
    if (profiles.size() != specs.size()) throw std::invalid_argument("profiles and specs differ in count");
    const std::size_t w = params.config().window;
    const std::size_t h = params.config().horizon;
    ForecastTable table;
    table.horizon = h;

    for (std::size_t a = 0; a < profiles.size(); ++a) {
        const EnergyProfile& p = profiles[a];
        std::vector<std::optional<ForecastDistribution>> series(p.size());
        if (p.size() >= w + h) {
            const auto features = profiles::encode_profile(p, specs[a], stats, latitude_deg);
            std::vector<Eigen::MatrixXd> inputs, exo;
            std::vector<std::size_t> hours;
            for (std::size_t t = w - 1; t + h < p.size(); ++t) {
                Eigen::MatrixXd x(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(profiles::kFeatureDim));
                for (std::size_t r = 0; r < w; ++r) {
                    const auto row = features[t + 1 - w + r].to_array();
                    for (std::size_t c = 0; c < profiles::kFeatureDim; ++c)
                        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
                }
                Eigen::MatrixXd e(static_cast<Eigen::Index>(h), 2);
                for (std::size_t k = 0; k < h; ++k) {
                    e(static_cast<Eigen::Index>(k), 0) = features[t + 1 + k].daylight_flag;
                    e(static_cast<Eigen::Index>(k), 1) = features[t + 1 + k].norm_daylight;
                }
                inputs.push_back(std::move(x));
                exo.push_back(std::move(e));
                hours.push_back(t);
            }
            const auto results = ktu::forward(params, inputs, exo);
            for (std::size_t i = 0; i < hours.size(); ++i) series[hours[i]] = results[i].distribution;
        }
        table.by_agent.push_back(std::move(series));
    }
    return table;
}

}  // namespace p2p::forecasts
