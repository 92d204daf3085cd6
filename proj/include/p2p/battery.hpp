#pragma once

namespace p2p::env {

struct BatteryState {
    double soc = 0.0;            // kWh, in [0, capacity]
    double capacity = 0.0;       // kWh
    double max_charge = 0.0;     // kW
    double max_discharge = 0.0;  // kW
    double efficiency = 1.0;     // round trip, in (0, 1]

    double soc_fraction() const { return capacity > 0.0 ? soc / capacity : 0.0; }
    double soc_pct() const { return 100.0 * soc_fraction(); }
};

enum class BatteryDirection { Charge, Discharge };

struct BatteryOutcome {
    BatteryState battery;
    double actual = 0.0;  // grid-side kWh drawn (charge) or delivered (discharge)
};

/// One-hour battery operation with one-way efficiency sqrt(round trip).
/// Requests are clamped by power, headroom and stored energy, never rejected.
BatteryOutcome apply_battery(const BatteryState& battery, double requested, BatteryDirection direction);

}  // namespace p2p::env
