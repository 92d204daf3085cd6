#include "p2p/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

namespace p2p::profiles {

namespace {

using namespace std::chrono;

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Relative hourly shapes; only the shape matters since series are renormalized.
constexpr std::array<double, 24> kHouseholdShape = {
    0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.75, 1.05, 1.10, 0.95, 0.85, 0.82,
    0.85, 0.82, 0.80, 0.85, 1.00, 1.25, 1.40, 1.45, 1.35, 1.15, 0.90, 0.70};

constexpr std::array<double, 24> kDairyFarmShape = {
    0.70, 0.68, 0.68, 0.70, 0.85, 1.35, 1.55, 1.40, 1.10, 1.00, 0.95, 0.95,
    1.00, 0.98, 0.95, 1.05, 1.35, 1.55, 1.40, 1.10, 0.95, 0.85, 0.78, 0.72};

double seasonal_load_multiplier(ProsumerKind kind, int doy) {
    const double amplitude = kind == ProsumerKind::DairyFarm ? 0.15 : 0.35;
    return 1.0 + amplitude * std::cos(2.0 * kPi * (doy - 15) / 365.0);
}

double declination_deg(int doy) { return 23.44 * std::sin(2.0 * kPi * (doy - 81) / 365.0); }

std::mt19937_64 stream_for(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

int season_index(int month) {
    switch (month) {
        case 12: case 1: case 2: return 0;
        case 3: case 4: case 5: return 1;
        case 6: case 7: case 8: return 2;
        default: return 3;
    }
}

double size_category_of(ProsumerKind kind) {
    switch (kind) {
        case ProsumerKind::Household: return 0.0;
        case ProsumerKind::HouseholdWithEV: return 0.5;
        case ProsumerKind::DairyFarm: return 1.0;
    }
    return 0.0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

double parse_energy(const std::string& field, std::size_t row, const char* column) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(field, &used);
    } catch (const std::exception&) {
        throw CsvRowError(row, std::string("malformed ") + column + " '" + field + "'");
    }
    if (used != field.size() || !std::isfinite(value))
        throw CsvRowError(row, std::string("malformed ") + column + " '" + field + "'");
    if (value < 0.0) throw CsvRowError(row, std::string("negative ") + column);
    return value;
}

}  // namespace

std::string to_string(ProsumerKind kind) {
    switch (kind) {
        case ProsumerKind::DairyFarm: return "DairyFarm";
        case ProsumerKind::Household: return "Household";
        case ProsumerKind::HouseholdWithEV: return "HouseholdWithEV";
    }
    return "Household";
}

ProsumerKind prosumer_kind_from_string(const std::string& s) {
    if (s == "DairyFarm") return ProsumerKind::DairyFarm;
    if (s == "Household") return ProsumerKind::Household;
    if (s == "HouseholdWithEV") return ProsumerKind::HouseholdWithEV;
    throw ProfileError("unknown prosumer kind '" + s + "'");
}

std::vector<ProsumerSpec> default_community() {
    struct Row {
        const char* id;
        ProsumerKind kind;
        double annual_load;
        double battery;
    };
    constexpr std::array<Row, 10> rows = {{
        {"farm_1", ProsumerKind::DairyFarm, 62000.0, 30.0},
        {"farm_2", ProsumerKind::DairyFarm, 71000.0, 30.0},
        {"farm_3", ProsumerKind::DairyFarm, 55000.0, 30.0},
        {"farm_4", ProsumerKind::DairyFarm, 80000.0, 30.0},
        {"house_1", ProsumerKind::Household, 14000.0, 10.0},
        {"house_2", ProsumerKind::Household, 16500.0, 10.0},
        {"house_3", ProsumerKind::Household, 12000.0, 10.0},
        {"house_4", ProsumerKind::Household, 18000.0, 10.0},
        {"ev_house_1", ProsumerKind::HouseholdWithEV, 19000.0, 10.0},
        {"ev_house_2", ProsumerKind::HouseholdWithEV, 21000.0, 10.0},
    }};
    std::vector<ProsumerSpec> specs;
    specs.reserve(rows.size());
    for (const auto& r : rows) {
        specs.push_back({r.id, r.kind, r.annual_load, size_pv_capacity(r.annual_load).capacity_kwp, r.battery});
    }
    return specs;
}

// ---------------------------------------------------------------------------

HourStamp default_year_start() {
    return time_point_cast<hours>(sys_days{year{2023} / January / 1});
}

int hour_of_day(HourStamp t) {
    const auto day = floor<days>(t);
    return static_cast<int>((t - day).count());
}

int day_of_year(HourStamp t) {
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const sys_days jan1{ymd.year() / January / 1};
    return static_cast<int>((day - jan1).count()) + 1;
}

int month_of(HourStamp t) {
    const year_month_day ymd{floor<days>(t)};
    return static_cast<int>(static_cast<unsigned>(ymd.month()));
}

bool is_weekday(HourStamp t) {
    const weekday wd{floor<days>(t)};
    return wd != Saturday && wd != Sunday;
}

std::string format_iso8601(HourStamp t) {
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    std::ostringstream out;
    out << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
        << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day()) << 'T'
        << std::setw(2) << (t - day).count() << ":00:00Z";
    return out.str();
}

HourStamp parse_iso8601(const std::string& raw) {
    const std::string s = trim(raw);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char tail = '\0';
    const int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail);
    if (n < 5 || (n == 7 && tail != 'Z')) throw ProfileError("malformed timestamp '" + s + "'");
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23) throw ProfileError("invalid timestamp '" + s + "'");
    if (mi != 0 || sec != 0) throw ProfileError("non-hourly timestamp '" + s + "'");
    return time_point_cast<hours>(sys_days{ymd}) + hours(h);
}

// ---------------------------------------------------------------------------

Daylight compute_daylight(double latitude_deg, int doy) {
    if (!(std::abs(latitude_deg) < 66.5)) throw std::invalid_argument("latitude inside polar circle");
    if (doy < 1 || doy > 366) throw std::invalid_argument("day_of_year out of range");
    const double cos_h = -std::tan(latitude_deg * kDeg) * std::tan(declination_deg(doy) * kDeg);
    const double hour_angle = std::acos(std::clamp(cos_h, -1.0, 1.0)) / kDeg;
    const double length = 2.0 * hour_angle / 15.0;
    return {12.0 - length / 2.0, 12.0 + length / 2.0, length};
}

int daylight_flag(double latitude_deg, int doy, int hour) {
    const Daylight d = compute_daylight(latitude_deg, doy);
    const double h = static_cast<double>(hour);
    return (h >= d.sunrise && h < d.sunset) ? 1 : 0;
}

double max_yearly_daylight_hours(double latitude_deg) {
    thread_local double cached_latitude = std::numeric_limits<double>::quiet_NaN();
    thread_local double cached_max = 0.0;
    if (latitude_deg == cached_latitude) return cached_max;
    double best = 0.0;
    for (int doy = 1; doy <= 365; ++doy) best = std::max(best, compute_daylight(latitude_deg, doy).hours);
    cached_latitude = latitude_deg;
    cached_max = best;
    return best;
}

double norm_daylight(double latitude_deg, int doy) {
    return compute_daylight(latitude_deg, doy).hours / max_yearly_daylight_hours(latitude_deg);
}

PvSizing size_pv_capacity(double annual_load_kwh, double yield_kwh_per_kwp) {
    if (!(annual_load_kwh > 0.0)) throw std::invalid_argument("annual_load must be positive");
    if (!(yield_kwh_per_kwp > 0.0)) throw std::invalid_argument("PV yield must be positive");
    const double energy = kPvShareOfLoad * annual_load_kwh;
    return {energy, energy / yield_kwh_per_kwp};
}

// ---------------------------------------------------------------------------

std::vector<EnergyProfile> generate_synthetic_profiles(std::span<const ProsumerSpec> specs, std::uint64_t seed,
                                                       const GeneratorOptions& options) {
    if (specs.empty()) throw std::invalid_argument("no prosumer specs");
    for (const auto& spec : specs) {
        if (!(spec.annual_load_kwh > 0.0))
            throw std::invalid_argument("prosumer '" + spec.id + "' has non-positive annual_load");
        if (spec.pv_capacity_kwp < 0.0 || spec.battery_capacity_kwh < 0.0)
            throw std::invalid_argument("prosumer '" + spec.id + "' has negative capacity");
    }

    const std::size_t n = options.hours;
    std::vector<Daylight> daylight(367);
    for (int doy = 1; doy <= 366; ++doy) daylight[doy] = compute_daylight(options.latitude_deg, doy);

    std::vector<EnergyProfile> out;
    out.reserve(specs.size());
    for (std::size_t idx = 0; idx < specs.size(); ++idx) {
        const ProsumerSpec& spec = specs[idx];
        auto rng = stream_for(seed, idx);
        std::uniform_real_distribution<double> load_noise(1.0 - options.noise_fraction, 1.0 + options.noise_fraction);
        std::uniform_real_distribution<double> cloudiness(0.25, 1.0);
        std::uniform_real_distribution<double> hourly_weather(0.85, 1.15);

        const auto& shape = spec.kind == ProsumerKind::DairyFarm ? kDairyFarmShape : kHouseholdShape;
        EnergyProfile p;
        p.prosumer_id = spec.id;
        p.start = options.start;
        p.load.resize(n);
        p.generation.resize(n);

        std::vector<double> ev(n, 0.0);
        double day_weather = 1.0;
        for (std::size_t t = 0; t < n; ++t) {
            const HourStamp ts = p.timestamp(t);
            const int hour = hour_of_day(ts);
            const int doy = day_of_year(ts);
            if (hour == 0 || t == 0) day_weather = cloudiness(rng);

            p.load[t] = shape[hour] * seasonal_load_multiplier(spec.kind, doy) * load_noise(rng);
            if (spec.kind == ProsumerKind::HouseholdWithEV && is_weekday(ts) && hour >= options.ev_start_hour &&
                hour <= options.ev_end_hour) {
                ev[t] = options.ev_block_kwh;
            }

            const Daylight& d = daylight[doy];
            const double noon_elevation = 90.0 - options.latitude_deg + declination_deg(doy);
            const double amplitude = std::max(std::sin(noon_elevation * kDeg), 0.0);
            const double weather = day_weather * hourly_weather(rng);
            double pv = 0.0;
            if (daylight_flag(options.latitude_deg, doy, hour) == 1) {
                const double phase = (hour + 0.5 - d.sunrise) / d.hours;
                pv = std::max(std::sin(kPi * phase), 0.0) * amplitude * weather;
            }
            p.generation[t] = pv;
        }

        // Normalize to the annual targets (scaled for partial-year spans).
        const double span_fraction = static_cast<double>(n) / static_cast<double>(kHoursPerYear);
        // The EV block is added in physical units after the base curve is scaled.
        const double ev_sum = std::accumulate(ev.begin(), ev.end(), 0.0);
        const double base_target = spec.annual_load_kwh * span_fraction - ev_sum;
        if (!(base_target > 0.0))
            throw std::invalid_argument("prosumer '" + spec.id + "' annual_load too small for its EV block");
        const double load_sum = std::accumulate(p.load.begin(), p.load.end(), 0.0);
        const double load_scale = base_target / load_sum;
        for (std::size_t t = 0; t < n; ++t) p.load[t] = p.load[t] * load_scale + ev[t];

        const double pv_target = spec.pv_capacity_kwp * options.pv_yield_kwh_per_kwp * span_fraction;
        const double pv_sum = std::accumulate(p.generation.begin(), p.generation.end(), 0.0);
        const double pv_scale = pv_sum > 0.0 ? pv_target / pv_sum : 0.0;
        for (double& v : p.generation) v *= pv_scale;

        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::array<double, kFeatureDim> FeatureVector::to_array() const {
    return {hour_sin, hour_cos, day_sin, day_cos,
            season_onehot[0], season_onehot[1], season_onehot[2], season_onehot[3],
            size_category, daylight_flag, norm_daylight, lagged_load, lagged_generation};
}

NormStats fit_norm_stats(std::span<const EnergyProfile> profiles, double train_fraction) {
    double ls = 0.0, lss = 0.0, gs = 0.0, gss = 0.0;
    std::size_t count = 0;
    for (const auto& p : profiles) {
        const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(p.size())));
        for (std::size_t t = 0; t < cut; ++t) {
            ls += p.load[t];
            lss += p.load[t] * p.load[t];
            gs += p.generation[t];
            gss += p.generation[t] * p.generation[t];
        }
        count += cut;
    }
    NormStats stats;
    if (count == 0) return stats;
    const double n = static_cast<double>(count);
    stats.load_mean = ls / n;
    stats.gen_mean = gs / n;
    const double load_var = std::max(lss / n - stats.load_mean * stats.load_mean, 0.0);
    const double gen_var = std::max(gss / n - stats.gen_mean * stats.gen_mean, 0.0);
    stats.load_std = load_var > 1e-18 ? std::sqrt(load_var) : 1.0;
    stats.gen_std = gen_var > 1e-18 ? std::sqrt(gen_var) : 1.0;
    return stats;
}

FeatureVector encode_features(HourStamp timestamp, const LagContext& context, const ProsumerSpec& spec,
                              const NormStats& stats, double latitude_deg) {
    if (context.load_history.empty() || context.generation_history.empty())
        throw ProfileError("insufficient history to encode lagged features");

    const int hour = hour_of_day(timestamp);
    const int doy = day_of_year(timestamp);
    FeatureVector f;
    const double hour_phase = 2.0 * kPi * hour / 24.0;
    const double day_phase = 2.0 * kPi * (doy - 1) / 365.0;
    f.hour_sin = std::sin(hour_phase);
    f.hour_cos = std::cos(hour_phase);
    f.day_sin = std::sin(day_phase);
    f.day_cos = std::cos(day_phase);
    f.season_onehot[season_index(month_of(timestamp))] = 1.0;
    f.size_category = size_category_of(spec.kind);
    f.daylight_flag = daylight_flag(latitude_deg, doy, hour);
    f.norm_daylight = norm_daylight(latitude_deg, doy);
    f.lagged_load = (context.load_history.back() - stats.load_mean) / stats.load_std;
    f.lagged_generation = (context.generation_history.back() - stats.gen_mean) / stats.gen_std;
    return f;
}

std::vector<FeatureVector> encode_profile(const EnergyProfile& profile, const ProsumerSpec& spec,
                                          const NormStats& stats, double latitude_deg) {
    std::vector<FeatureVector> out;
    out.reserve(profile.size());
    const std::span<const double> load(profile.load);
    const std::span<const double> gen(profile.generation);
    for (std::size_t t = 0; t < profile.size(); ++t) {
        out.push_back(encode_features(profile.timestamp(t), {load.first(t + 1), gen.first(t + 1)}, spec, stats,
                                      latitude_deg));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t window_count(std::size_t length, std::size_t window, std::size_t horizon) {
    if (window == 0 || horizon == 0) throw std::invalid_argument("window and horizon must be >= 1");
    if (length < window + horizon) throw std::invalid_argument("series too short for window + horizon");
    return length - window - horizon + 1;
}

WindowedDataset build_windows(const EnergyProfile& profile, std::span<const FeatureVector> features,
                              std::size_t window, std::size_t horizon, SplitFractions split) {
    if (features.size() != profile.size()) throw std::invalid_argument("feature series not aligned with profile");
    const std::size_t n = window_count(profile.size(), window, horizon);

    WindowedDataset ds;
    ds.window = window;
    ds.horizon = horizon;
    ds.inputs.reserve(n);
    ds.targets.reserve(n);
    ds.exo.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Eigen::MatrixXd x(window, kFeatureDim);
        for (std::size_t r = 0; r < window; ++r) {
            const auto row = features[s + r].to_array();
            for (std::size_t c = 0; c < kFeatureDim; ++c) x(r, c) = row[c];
        }
        Eigen::MatrixXd y(horizon, 2);
        Eigen::MatrixXd e(horizon, 2);
        for (std::size_t k = 0; k < horizon; ++k) {
            const std::size_t t = s + window + k;
            y(k, 0) = profile.load[t];
            y(k, 1) = profile.generation[t];
            e(k, 0) = features[t].daylight_flag;
            e(k, 1) = features[t].norm_daylight;
        }
        ds.inputs.push_back(std::move(x));
        ds.targets.push_back(std::move(y));
        ds.exo.push_back(std::move(e));
    }

    // Chronological split; a gap of window + horizon - 1 samples between splits
    // keeps every later sample's hours disjoint from earlier samples' targets.
    const std::size_t gap = window + horizon - 1;
    const auto a = static_cast<std::size_t>(std::floor(split.train * static_cast<double>(n)));
    const auto b = static_cast<std::size_t>(std::floor((split.train + split.validation) * static_cast<double>(n)));
    for (std::size_t s = 0; s < a; ++s) ds.train.push_back(s);
    for (std::size_t s = a + gap; s < b; ++s) ds.validation.push_back(s);
    for (std::size_t s = b + gap; s < n; ++s) ds.test.push_back(s);
    return ds;
}

void append_dataset(WindowedDataset& into, WindowedDataset&& from) {
    if (into.inputs.empty()) {
        into = std::move(from);
        return;
    }
    if (into.window != from.window || into.horizon != from.horizon)
        throw std::invalid_argument("cannot merge datasets with different window/horizon");
    const std::size_t offset = into.size();
    auto shift = [offset](std::vector<std::size_t>& dst, const std::vector<std::size_t>& src) {
        for (auto i : src) dst.push_back(i + offset);
    };
    shift(into.train, from.train);
    shift(into.validation, from.validation);
    shift(into.test, from.test);
    std::move(from.inputs.begin(), from.inputs.end(), std::back_inserter(into.inputs));
    std::move(from.targets.begin(), from.targets.end(), std::back_inserter(into.targets));
    std::move(from.exo.begin(), from.exo.end(), std::back_inserter(into.exo));
}

// ---------------------------------------------------------------------------

std::vector<EnergyProfile> load_profiles_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProfileError("cannot open profile file '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw CsvRowError(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const std::vector<std::string> expected = {"prosumer_id", "timestamp", "load_kwh", "generation_kwh"};
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    if (header != expected) throw CsvRowError(1, "header must be prosumer_id,timestamp,load_kwh,generation_kwh");

    std::vector<EnergyProfile> profiles;
    std::map<std::string, std::size_t> index_of;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) throw CsvRowError(row, "expected 4 columns, got " + std::to_string(fields.size()));
        const std::string id = trim(fields[0]);
        if (id.empty()) throw CsvRowError(row, "empty prosumer_id");
        HourStamp ts;
        try {
            ts = parse_iso8601(fields[1]);
        } catch (const ProfileError& e) {
            throw CsvRowError(row, e.what());
        }
        const double load = parse_energy(trim(fields[2]), row, "load_kwh");
        const double gen = parse_energy(trim(fields[3]), row, "generation_kwh");

        auto [it, inserted] = index_of.try_emplace(id, profiles.size());
        if (inserted) {
            EnergyProfile p;
            p.prosumer_id = id;
            p.start = ts;
            profiles.push_back(std::move(p));
        }
        EnergyProfile& p = profiles[it->second];
        const HourStamp expected_ts = p.timestamp(p.size());
        if (ts != expected_ts) {
            if (ts > expected_ts)
                throw CsvRowError(row, "gap in hourly series for '" + id + "' (expected " +
                                           format_iso8601(expected_ts) + ")");
            throw CsvRowError(row, "non-hourly or out-of-order timestamp for '" + id + "'");
        }
        p.load.push_back(load);
        p.generation.push_back(gen);
    }
    if (profiles.empty()) throw ProfileError("profile file '" + path.string() + "' has no data rows");
    for (const auto& p : profiles) {
        if (p.start != profiles.front().start || p.size() != profiles.front().size())
            throw ProfileError("profile '" + p.prosumer_id + "' is not aligned with '" +
                               profiles.front().prosumer_id + "'");
    }
    return profiles;
}

void write_profiles_csv(const std::filesystem::path& path, std::span<const EnergyProfile> profiles) {
    std::ofstream out(path);
    if (!out) throw ProfileError("cannot write profile file '" + path.string() + "'");
    out << "prosumer_id,timestamp,load_kwh,generation_kwh\n";
    out << std::setprecision(17);
    for (const auto& p : profiles) {
        for (std::size_t t = 0; t < p.size(); ++t) {
            out << p.prosumer_id << ',' << format_iso8601(p.timestamp(t)) << ',' << p.load[t] << ','
                << p.generation[t] << '\n';
        }
    }
}

}  // namespace p2p::profiles
