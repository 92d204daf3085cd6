#pragma once

#include <random>
#include <span>

#include <Eigen/Core>

#include "p2p/ktu/model.hpp"

namespace p2p::ktu {

/// Central interval per target (column 0 load, column 1 PV) and horizon step.
struct IntervalForecast {
    Eigen::MatrixXd lower;  // horizon x 2
    Eigen::MatrixXd upper;
    Eigen::MatrixXd mean;
};

/// Empirical ((1-level)/2, (1+level)/2) quantiles of `n_samples` Gaussian draws.
/// PV samples are clamped at zero and forced to zero at night steps.
IntervalForecast intervals_from_distribution(const ForecastDistribution& dist, const Eigen::VectorXd& daylight_flag,
                                             std::size_t n_samples, double level, std::mt19937_64& rng);

IntervalForecast predict_with_intervals(const KtuParameters& params, const Eigen::MatrixXd& window,
                                        const Eigen::MatrixXd& exo, std::size_t n_samples, double level,
                                        std::mt19937_64& rng);

/// Fraction of targets inside [lower, upper].
double picp(std::span<const double> lower, std::span<const double> upper, std::span<const double> targets);

double mpiw(std::span<const double> lower, std::span<const double> upper);

/// Closed-form CRPS of N(mu, sigma^2) at y.
double crps_gaussian(double mu, double sigma, double y);

double standard_normal_cdf(double z);
double standard_normal_pdf(double z);

}  // namespace p2p::ktu
