#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace p2p::profiles {

using HourStamp = std::chrono::sys_time<std::chrono::hours>;

inline constexpr std::size_t kHoursPerYear = 8760;
inline constexpr double kHelsinkiLatitude = 60.17;
inline constexpr double kDefaultPvYield = 900.0;  // kWh per kWp per year
inline constexpr double kPvShareOfLoad = 0.40;

enum class ProsumerKind { DairyFarm, Household, HouseholdWithEV };

std::string to_string(ProsumerKind kind);
ProsumerKind prosumer_kind_from_string(const std::string& s);

struct ProsumerSpec {
    std::string id;
    ProsumerKind kind = ProsumerKind::Household;
    double annual_load_kwh = 0.0;
    double pv_capacity_kwp = 0.0;
    double battery_capacity_kwh = 0.0;
};

/// Four dairy farms, four households and two EV households, PV sized at 40% of load.
std::vector<ProsumerSpec> default_community();

/// Hourly load and PV energy for one prosumer, aligned to `start + i` hours.
struct EnergyProfile {
    std::string prosumer_id;
    HourStamp start{};
    std::vector<double> load;
    std::vector<double> generation;

    std::size_t size() const { return load.size(); }
    HourStamp timestamp(std::size_t i) const { return start + std::chrono::hours(static_cast<long>(i)); }
};

class ProfileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by the CSV reader; `row` is the 1-based line number in the file.
class CsvRowError : public ProfileError {
public:
    CsvRowError(std::size_t row, const std::string& what)
        : ProfileError("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

// ---------------------------------------------------------------------------
// Calendar helpers

HourStamp default_year_start();  // 2023-01-01T00:00Z, a non-leap year
int hour_of_day(HourStamp t);
int day_of_year(HourStamp t);  // 1-based
int month_of(HourStamp t);     // 1..12
bool is_weekday(HourStamp t);
std::string format_iso8601(HourStamp t);
HourStamp parse_iso8601(const std::string& s);

// ---------------------------------------------------------------------------
// Daylight

struct Daylight {
    double sunrise = 0.0;  // local solar hour
    double sunset = 0.0;
    double hours = 0.0;
};

/// Day length from the solar-declination approximation; solar noon at 12:00.
Daylight compute_daylight(double latitude_deg, int day_of_year);

/// 1 iff the hour starts inside [sunrise, sunset).
int daylight_flag(double latitude_deg, int day_of_year, int hour);

/// Longest day of a 365-day year at this latitude.
double max_yearly_daylight_hours(double latitude_deg);

double norm_daylight(double latitude_deg, int day_of_year);

// ---------------------------------------------------------------------------
// Sizing and generation

struct PvSizing {
    double annual_energy_kwh = 0.0;
    double capacity_kwp = 0.0;
};

PvSizing size_pv_capacity(double annual_load_kwh, double yield_kwh_per_kwp = kDefaultPvYield);

struct GeneratorOptions {
    double latitude_deg = kHelsinkiLatitude;
    double pv_yield_kwh_per_kwp = kDefaultPvYield;
    double noise_fraction = 0.10;   // uniform multiplicative load noise
    double ev_block_kwh = 3.0;      // per hour, weekdays
    int ev_start_hour = 18;
    int ev_end_hour = 21;           // inclusive
    HourStamp start = default_year_start();
    std::size_t hours = kHoursPerYear;
};

std::vector<EnergyProfile> generate_synthetic_profiles(std::span<const ProsumerSpec> specs,
                                                       std::uint64_t seed,
                                                       const GeneratorOptions& options = {});

// ---------------------------------------------------------------------------
// Feature encoding

inline constexpr std::size_t kFeatureDim = 13;

struct FeatureVector {
    double hour_sin = 0.0;
    double hour_cos = 1.0;
    double day_sin = 0.0;
    double day_cos = 1.0;
    std::array<double, 4> season_onehot{};  // winter, spring, summer, autumn
    double size_category = 0.0;
    double daylight_flag = 0.0;
    double norm_daylight = 0.0;
    double lagged_load = 0.0;
    double lagged_generation = 0.0;

    std::array<double, kFeatureDim> to_array() const;
};

/// z-score statistics for the lagged energy features, fitted on the training split.
struct NormStats {
    double load_mean = 0.0;
    double load_std = 1.0;
    double gen_mean = 0.0;
    double gen_std = 1.0;
};

NormStats fit_norm_stats(std::span<const EnergyProfile> profiles, double train_fraction = 0.70);

/// Observed history up to and including the encoded hour (most recent last).
struct LagContext {
    std::span<const double> load_history;
    std::span<const double> generation_history;
};

FeatureVector encode_features(HourStamp timestamp, const LagContext& context, const ProsumerSpec& spec,
                              const NormStats& stats, double latitude_deg = kHelsinkiLatitude);

/// Encodes every hour of a profile (history = the profile itself).
std::vector<FeatureVector> encode_profile(const EnergyProfile& profile, const ProsumerSpec& spec,
                                          const NormStats& stats, double latitude_deg = kHelsinkiLatitude);

// ---------------------------------------------------------------------------
// Sliding windows

struct WindowedDataset {
    std::size_t window = 0;
    std::size_t horizon = 0;
    std::vector<Eigen::MatrixXd> inputs;   // window x feature_dim
    std::vector<Eigen::MatrixXd> targets;  // horizon x 2 (load, pv)
    std::vector<Eigen::MatrixXd> exo;      // horizon x 2 (daylight_flag, norm_daylight)
    std::vector<std::size_t> train, validation, test;  // sample indices

    std::size_t size() const { return inputs.size(); }
    std::size_t feature_dim() const { return inputs.empty() ? 0 : static_cast<std::size_t>(inputs.front().cols()); }
};

std::size_t window_count(std::size_t length, std::size_t window, std::size_t horizon);

struct SplitFractions {
    double train = 0.70;
    double validation = 0.15;
};

WindowedDataset build_windows(const EnergyProfile& profile, std::span<const FeatureVector> features,
                              std::size_t window, std::size_t horizon, SplitFractions split = {});

/// Concatenates per-prosumer datasets, keeping each one's chronological split.
void append_dataset(WindowedDataset& into, WindowedDataset&& from);

// ---------------------------------------------------------------------------
// CSV

std::vector<EnergyProfile> load_profiles_csv(const std::filesystem::path& path);
void write_profiles_csv(const std::filesystem::path& path, std::span<const EnergyProfile> profiles);

}  // namespace p2p::profiles
