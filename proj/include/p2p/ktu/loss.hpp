#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "p2p/forecast.hpp"

namespace p2p::ktu {

struct LossWeights {
    double alpha_smooth = 0.01;
    double beta_night = 0.1;
    double epsilon_stab = 1e-6;
};

struct LossBreakdown {
    double nll = 0.0;
    double smoothness = 0.0;
    double night_pv_penalty = 0.0;
    double total = 0.0;
};

/// Gradients of the batch total with respect to each sample's head outputs.
struct SampleLossGradient {
    Eigen::VectorXd mu_load, var_load, mu_pv, var_pv, pv_pre_mask;
};

/// Composite objective averaged over the batch:
///   nll    = 1/2 sum [log(var + eps) + (y - mu)^2 / (var + eps)] over both targets and all steps
///   smooth = sum_t |mu_{t+1} - mu_t| for the load and PV mean trajectories
///   night  = sum_t pv_pre_mask_t * (1 - daylight_t)
/// The night term uses the PV mean before the daylight mask; after masking it would vanish.
/// `targets[i]` is horizon x 2 (load, pv). Throws KtuError on a non-positive variance.
LossBreakdown composite_loss(std::span<const ForecastDistribution> pred, std::span<const Eigen::VectorXd> pv_pre_mask,
                             std::span<const Eigen::MatrixXd> targets, std::span<const Eigen::VectorXd> daylight,
                             const LossWeights& weights, std::vector<SampleLossGradient>* gradients = nullptr);

}  // namespace p2p::ktu
