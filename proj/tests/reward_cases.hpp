#pragma once

#include <vector>

#include "p2p/rewards.hpp"

namespace p2p::test {

using rewards::AgentAction;
using rewards::AgentObservation;
using A = rewards::AgentAction;
using T = rewards::TariffPeriod;

inline AgentObservation obs(double load, double gen, double soc, T tariff, double alpha = 0.0, double deficit = 0.0) {
    AgentObservation o;
    o.load = load;
    o.generation = gen;
    o.soc_pct = soc;
    o.tariff = tariff;
    o.confidence = alpha;
    o.peak_deficit = deficit;
    return o;
}

struct Golden {
    const char* name;
    A action;
    AgentObservation o;
    double expected;
};

inline const std::vector<Golden>& golden_cases() {
    static const std::vector<Golden> cases = {
        // Charge and buy
        {"charge+buy pre-peak with forecast deficit", A::ChargeAndBuy, obs(2, 1, 50, T::NP, 0.8, 3.0), 2.7},
        {"charge+buy at peak", A::ChargeAndBuy, obs(2, 1, 50, T::P, 0.8, 3.0), 0.0},
        {"charge+buy at night", A::ChargeAndBuy, obs(1, 0, 40, T::N, 0.3), 0.8},
        {"charge+buy daytime deficit", A::ChargeAndBuy, obs(3, 1, 70, T::D, 0.9), 0.5},
        {"charge+buy pre-peak without deficit falls to phi3", A::ChargeAndBuy, obs(3, 1, 70, T::NP, 0.9, -1.0), 0.5},
        {"charge+buy full battery", A::ChargeAndBuy, obs(1, 0, 95, T::N, 0.9), 0.0},
        {"charge+buy daytime surplus", A::ChargeAndBuy, obs(1, 3, 50, T::D, 0.9), 0.0},
        // Buy
        {"buy empty battery at peak", A::Buy, obs(3, 1, 5, T::P), 0.25},
        {"buy empty battery off-peak", A::Buy, obs(3, 1, 5, T::D), 0.5},
        {"buy with charge left", A::Buy, obs(3, 1, 10, T::D), 0.0},
        {"buy with surplus", A::Buy, obs(1, 3, 5, T::P), 0.0},
        // Sell
        {"sell full battery daytime", A::Sell, obs(1, 3, 95, T::D), 0.5},
        {"sell full battery at peak", A::Sell, obs(1, 3, 90, T::P), 0.75},
        {"sell not full", A::Sell, obs(1, 3, 89, T::D), 0.0},
        {"sell in deficit", A::Sell, obs(3, 1, 95, T::P), 0.0},
        // Discharge and sell
        {"discharge+sell at peak", A::DischargeAndSell, obs(1, 3, 30, T::P, 0.6), 1.2},
        {"discharge+sell full battery off-peak", A::DischargeAndSell, obs(1, 3, 95, T::D, 0.6), 0.5},
        {"discharge+sell low battery off-peak", A::DischargeAndSell, obs(1, 3, 30, T::D, 0.6), 0.0},
        {"discharge+sell below 20% at peak", A::DischargeAndSell, obs(1, 3, 15, T::P, 0.6), 0.0},
        // Discharge and buy
        {"discharge+buy at peak", A::DischargeAndBuy, obs(3, 1, 50, T::P, 1.0), 1.5},
        {"discharge+buy off-peak", A::DischargeAndBuy, obs(3, 1, 10, T::N, 1.0), 0.5},
        {"discharge+buy empty battery", A::DischargeAndBuy, obs(3, 1, 9, T::P, 1.0), 0.0},
        // Self-consumption
        {"self-consumption balanced at peak", A::SelfConsumption, obs(2.0, 1.95, 50, T::P), 1.2},
        {"self-consumption balanced off-peak", A::SelfConsumption, obs(2.0, 2.05, 50, T::D), 1.0},
        {"self-consumption near balance", A::SelfConsumption, obs(2.0, 2.15, 50, T::P), 0.5},
        {"self-consumption unbalanced", A::SelfConsumption, obs(2.0, 2.5, 50, T::P), 0.0},
        // Self and charge
        {"self+charge pre-peak surplus", A::SelfAndCharge, obs(1, 3, 50, T::NP, 0.5), 2.5},
        {"self+charge daytime surplus", A::SelfAndCharge, obs(1, 3, 50, T::D, 0.5), 0.75},
        {"self+charge at peak", A::SelfAndCharge, obs(1, 3, 50, T::P, 0.5), 0.0},
        {"self+charge full battery", A::SelfAndCharge, obs(1, 3, 91, T::D, 0.5), 0.0},
        {"self+charge deficit", A::SelfAndCharge, obs(3, 1, 50, T::NP, 0.5), 0.0},
        // Self and discharge
        {"self+discharge at peak", A::SelfAndDischarge, obs(3, 1, 20, T::P, 0.2), 0.9},
        {"self+discharge off-peak", A::SelfAndDischarge, obs(3, 1, 60, T::D, 0.2), 0.5},
        {"self+discharge low battery", A::SelfAndDischarge, obs(3, 1, 19, T::P, 0.2), 0.0},
    };
    return cases;
}

}  // namespace p2p::test
