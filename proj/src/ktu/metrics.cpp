#include "p2p/ktu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace p2p::ktu {

namespace {

// Linear interpolation between order statistics (type 7).
double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

}  // namespace

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double standard_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

IntervalForecast intervals_from_distribution(const ForecastDistribution& dist, const Eigen::VectorXd& daylight_flag,
                                             std::size_t n_samples, double level, std::mt19937_64& rng) {
    if (n_samples < 100) throw KtuError("predict_with_intervals needs at least 100 samples");
    if (!(level > 0.0 && level < 1.0)) throw KtuError("interval level must be in (0, 1)");
    const Eigen::Index h = dist.horizon();
    if (daylight_flag.size() != h) throw KtuError("daylight flags must cover the horizon");

    IntervalForecast out;
    out.lower.resize(h, 2);
    out.upper.resize(h, 2);
    out.mean.resize(h, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> samples(n_samples);
    const double q_lo = (1.0 - level) / 2.0;
    const double q_hi = (1.0 + level) / 2.0;

    for (int target = 0; target < 2; ++target) {
        const Eigen::VectorXd& mu = target == 0 ? dist.mu_load : dist.mu_pv;
        const Eigen::VectorXd& var = target == 0 ? dist.var_load : dist.var_pv;
        for (Eigen::Index k = 0; k < h; ++k) {
            const double sigma = std::sqrt(std::max(var[k], 0.0));
            for (auto& s : samples) {
                s = mu[k] + sigma * normal(rng);
                if (target == 1) s = daylight_flag[k] > 0.0 ? std::max(s, 0.0) : 0.0;
            }
            std::sort(samples.begin(), samples.end());
            out.lower(k, target) = quantile_sorted(samples, q_lo);
            out.upper(k, target) = quantile_sorted(samples, q_hi);
            out.mean(k, target) = mu[k];
        }
    }
    return out;
}

IntervalForecast predict_with_intervals(const KtuParameters& params, const Eigen::MatrixXd& window,
                                        const Eigen::MatrixXd& exo, std::size_t n_samples, double level,
                                        std::mt19937_64& rng) {
    const ForwardResult r = forward(params, window, exo);
    return intervals_from_distribution(r.distribution, exo.col(0), n_samples, level, rng);
}

double picp(std::span<const double> lower, std::span<const double> upper, std::span<const double> targets) {
    if (lower.size() != upper.size() || lower.size() != targets.size()) throw KtuError("picp inputs differ in length");
    if (targets.empty()) throw KtuError("picp of an empty set");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i] >= lower[i] && targets[i] <= upper[i]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(targets.size());
}

double mpiw(std::span<const double> lower, std::span<const double> upper) {
    if (lower.size() != upper.size()) throw KtuError("mpiw inputs differ in length");
    if (lower.empty()) throw KtuError("mpiw of an empty set");
    double sum = 0.0;
    for (std::size_t i = 0; i < lower.size(); ++i) sum += upper[i] - lower[i];
    return sum / static_cast<double>(lower.size());
}

double crps_gaussian(double mu, double sigma, double y) {
    if (!(sigma > 0.0)) throw KtuError("crps_gaussian requires sigma > 0");
    const double z = (y - mu) / sigma;
    return sigma * (z * (2.0 * standard_normal_cdf(z) - 1.0) + 2.0 * standard_normal_pdf(z) -
                    1.0 / std::sqrt(std::numbers::pi));
}

}  // namespace p2p::ktu
