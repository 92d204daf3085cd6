#pragma once

#include <Eigen/Core>

namespace p2p {

/// Per-horizon-step Gaussian forecast of load and PV energy (kWh).
struct ForecastDistribution {
    Eigen::VectorXd mu_load;
    Eigen::VectorXd var_load;
    Eigen::VectorXd mu_pv;
    Eigen::VectorXd var_pv;

    Eigen::Index horizon() const { return mu_load.size(); }

    static ForecastDistribution zeros(Eigen::Index horizon) {
        return {Eigen::VectorXd::Zero(horizon), Eigen::VectorXd::Zero(horizon), Eigen::VectorXd::Zero(horizon),
                Eigen::VectorXd::Zero(horizon)};
    }
};

}  // namespace p2p
