#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "p2p/profiles.hpp"

using namespace p2p::profiles;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// NOAA general solar position: Fourier-series declination and the 90.833°
// zenith for apparent sunrise/sunset (refraction + solar disc).
double noaa_day_length(double latitude_deg, int doy) {
    const double g = 2.0 * kPi / 365.0 * (doy - 1);
    const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                        0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);
    const double lat = latitude_deg * kPi / 180.0;
    const double zenith = 90.833 * kPi / 180.0;
    const double cos_h = std::cos(zenith) / (std::cos(lat) * std::cos(decl)) - std::tan(lat) * std::tan(decl);
    return 2.0 * std::acos(cos_h) * 180.0 / kPi / 15.0;
}

double noaa_max_day_length(double latitude_deg) {
    double best = 0.0;
    for (int d = 1; d <= 365; ++d) best = std::max(best, noaa_day_length(latitude_deg, d));
    return best;
}

ProsumerSpec household(double annual = 5000.0) {
    return {"h", ProsumerKind::Household, annual, size_pv_capacity(annual).capacity_kwp, 10.0};
}

EnergyProfile flat_profile(std::size_t n) {
    EnergyProfile p;
    p.prosumer_id = "x";
    p.start = default_year_start();
    p.load.assign(n, 1.0);
    p.generation.assign(n, 0.0);
    return p;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("p2p_profiles_" + name); }

}  // namespace

TEST_CASE("pv sizing is 40% of annual load") {
    CHECK(size_pv_capacity(10000.0).annual_energy_kwh == doctest::Approx(4000.0));
    CHECK(size_pv_capacity(5000.0, 900.0).capacity_kwp == doctest::Approx(0.4 * 5000.0 / 900.0));
    CHECK(size_pv_capacity(5000.0).capacity_kwp == doctest::Approx(2.22).epsilon(0.005));
    CHECK_THROWS(size_pv_capacity(0.0));
    CHECK_THROWS(size_pv_capacity(-3.0));
}

TEST_CASE("daylight matches the solar oracle") {
    CHECK(compute_daylight(60.17, 80).hours == doctest::Approx(12.0).epsilon(0.5 / 12.0));
    CHECK(std::abs(compute_daylight(60.17, 172).hours - noaa_day_length(60.17, 172)) < 0.5);
    for (int d : {1, 50, 120, 200, 300, 365}) CHECK(std::abs(compute_daylight(0.0, d).hours - 12.0) < 0.2);
    CHECK_THROWS(compute_daylight(70.0, 100));
    CHECK_THROWS(compute_daylight(60.0, 0));

    const Daylight d = compute_daylight(60.17, 172);
    CHECK(d.sunset - d.sunrise == doctest::Approx(d.hours));
    for (int h = 0; h < 24; ++h)
        CHECK(daylight_flag(60.17, 172, h) == ((h >= d.sunrise && h < d.sunset) ? 1 : 0));
}

TEST_CASE("norm daylight near the solstice") {
    const double nd = norm_daylight(60.17, 172);
    CHECK(nd > 0.95);
    CHECK(nd <= 1.0);
    const double oracle = noaa_day_length(60.17, 172) / noaa_max_day_length(60.17);
    CHECK(std::abs(nd - oracle) < 0.03);
    for (int day = 1; day <= 365; ++day) {
        const double v = norm_daylight(60.17, day);
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("synthetic profiles") {
    const std::vector<ProsumerSpec> specs = default_community();
    REQUIRE(specs.size() == 10);
    CHECK(std::count_if(specs.begin(), specs.end(), [](auto& s) { return s.kind == ProsumerKind::DairyFarm; }) == 4);
    CHECK(std::count_if(specs.begin(), specs.end(), [](auto& s) { return s.kind == ProsumerKind::Household; }) == 4);
    CHECK(std::count_if(specs.begin(), specs.end(),
                        [](auto& s) { return s.kind == ProsumerKind::HouseholdWithEV; }) == 2);

    const auto profiles = generate_synthetic_profiles(specs, 7);
    const auto again = generate_synthetic_profiles(specs, 7);
    REQUIRE(profiles.size() == specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& p = profiles[i];
        REQUIRE(p.size() == kHoursPerYear);
        CHECK(p.load == again[i].load);
        CHECK(p.generation == again[i].generation);
        const double load = std::accumulate(p.load.begin(), p.load.end(), 0.0);
        const double gen = std::accumulate(p.generation.begin(), p.generation.end(), 0.0);
        CHECK(std::abs(load - specs[i].annual_load_kwh) <= 0.05 * specs[i].annual_load_kwh);
        CHECK(gen / load >= 0.36);
        CHECK(gen / load <= 0.44);
        for (std::size_t t = 0; t < p.size(); ++t) {
            REQUIRE(p.load[t] >= 0.0);
            REQUIRE(p.generation[t] >= 0.0);
            const HourStamp ts = p.timestamp(t);
            if (daylight_flag(kHelsinkiLatitude, day_of_year(ts), hour_of_day(ts)) == 0) REQUIRE(p.generation[t] == 0.0);
        }
    }
    const auto other = generate_synthetic_profiles(specs, 8);
    CHECK(other[0].load != profiles[0].load);

    const std::vector<ProsumerSpec> bad = {{"z", ProsumerKind::Household, 0.0, 0.0, 0.0}};
    CHECK_THROWS(generate_synthetic_profiles(bad, 1));
    CHECK_THROWS(generate_synthetic_profiles(std::vector<ProsumerSpec>{}, 1));
}

TEST_CASE("ev households charge on weekday evenings") {
    const std::vector<ProsumerSpec> specs = {
        {"ev", ProsumerKind::HouseholdWithEV, 19000.0, size_pv_capacity(19000.0).capacity_kwp, 10.0}};
    const auto p = generate_synthetic_profiles(specs, 3).front();
    for (std::size_t t = 0; t < p.size(); ++t) {
        const HourStamp ts = p.timestamp(t);
        const int h = hour_of_day(ts);
        if (is_weekday(ts) && h >= 18 && h <= 21) REQUIRE(p.load[t] > 3.0);
    }
}

TEST_CASE("feature encoding") {
    const NormStats stats;
    const std::vector<double> hist{1.0, 2.0};
    const LagContext ctx{hist, hist};
    const HourStamp jan1 = default_year_start();

    const FeatureVector at6 = encode_features(jan1 + std::chrono::hours(6), ctx, household(), stats);
    CHECK(at6.hour_sin == doctest::Approx(1.0));
    CHECK(at6.hour_cos == doctest::Approx(0.0).epsilon(1e-12));
    const FeatureVector at0 = encode_features(jan1, ctx, household(), stats);
    CHECK(at0.hour_sin == doctest::Approx(0.0));
    CHECK(at0.hour_cos == doctest::Approx(1.0));
    CHECK(at0.season_onehot[0] == 1.0);
    CHECK(at0.lagged_load == doctest::Approx(2.0));

    const std::vector<double> empty;
    CHECK_THROWS_AS(encode_features(jan1, {empty, empty}, household(), stats), ProfileError);

    for (int t = 0; t < 24 * 365; t += 7) {
        const FeatureVector a = encode_features(jan1 + std::chrono::hours(t), ctx, household(), stats);
        CHECK(a.hour_sin * a.hour_sin + a.hour_cos * a.hour_cos == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(a.day_sin * a.day_sin + a.day_cos * a.day_cos == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(a.season_onehot[0] + a.season_onehot[1] + a.season_onehot[2] + a.season_onehot[3] == 1.0);
        if (t + 24 < 24 * 365) {
            const FeatureVector b = encode_features(jan1 + std::chrono::hours(t + 24), ctx, household(), stats);
            CHECK(a.hour_sin == doctest::Approx(b.hour_sin));
            CHECK(a.hour_cos == doctest::Approx(b.hour_cos));
        }
    }
}

TEST_CASE("norm stats use the training split only") {
    EnergyProfile p = flat_profile(100);
    for (std::size_t t = 70; t < 100; ++t) p.load[t] = 1000.0;
    const std::vector<EnergyProfile> ps{p};
    const NormStats s = fit_norm_stats(ps);
    CHECK(s.load_mean == doctest::Approx(1.0));
}

TEST_CASE("window counts") {
    const std::vector<FeatureVector> f10(10), f7(7), f6(6);
    CHECK(build_windows(flat_profile(10), f10, 4, 3).size() == 4);
    CHECK(build_windows(flat_profile(7), f7, 4, 3).size() == 1);
    CHECK_THROWS(build_windows(flat_profile(6), f6, 4, 3));

    std::mt19937 rng(11);
    std::uniform_int_distribution<std::size_t> len(2, 80), wh(1, 12);
    for (int i = 0; i < 300; ++i) {
        const std::size_t w = wh(rng), h = wh(rng), n = std::max(len(rng), w + h);
        std::size_t enumerated = 0;
        for (std::size_t s = 0; s + w + h <= n; ++s) ++enumerated;
        CHECK(window_count(n, w, h) == enumerated);
    }
}

TEST_CASE("windows do not overlap their targets and splits are disjoint") {
    EnergyProfile p = flat_profile(1000);
    for (std::size_t t = 0; t < p.size(); ++t) p.load[t] = static_cast<double>(t);
    std::vector<FeatureVector> f(1000);
    for (std::size_t t = 0; t < f.size(); ++t) f[t].lagged_load = static_cast<double>(t);
    const WindowedDataset ds = build_windows(p, f, 24, 3);
    for (std::size_t s = 0; s < ds.size(); ++s) {
        const double last_input_hour = ds.inputs[s](23, 11);
        CHECK(ds.targets[s](0, 0) == last_input_hour + 1.0);
    }
    // Every validation/test sample reads only hours after the previous split's targets.
    const double train_last_target = ds.targets[ds.train.back()](2, 0);
    CHECK(ds.inputs[ds.validation.front()](0, 11) > train_last_target);
    const double val_last_target = ds.targets[ds.validation.back()](2, 0);
    CHECK(ds.inputs[ds.test.front()](0, 11) > val_last_target);
}

TEST_CASE("csv round trip and validation") {
    const std::vector<ProsumerSpec> specs = {household(), {"f", ProsumerKind::DairyFarm, 60000.0, 26.0, 30.0}};
    GeneratorOptions opt;
    opt.hours = 48;
    const auto profiles = generate_synthetic_profiles(specs, 1, opt);
    const fs::path path = temp_file("roundtrip.csv");
    write_profiles_csv(path, profiles);
    const auto back = load_profiles_csv(path);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].prosumer_id == profiles[i].prosumer_id);
        CHECK(back[i].start == profiles[i].start);
        CHECK(back[i].load == profiles[i].load);
        CHECK(back[i].generation == profiles[i].generation);
    }

    auto write = [](const fs::path& f, const std::string& body) {
        std::ofstream(f) << "prosumer_id,timestamp,load_kwh,generation_kwh\n" << body;
    };
    const fs::path bad = temp_file("bad.csv");
    write(bad, "a,2023-01-01T00:00:00Z,1,0\na,2023-01-01T01:00:00Z,-1,0\n");
    try {
        load_profiles_csv(bad);
        FAIL("negative load accepted");
    } catch (const CsvRowError& e) {
        CHECK(e.row() == 3);
    }
    write(bad, "a,2023-01-01T00:00:00Z,1,0\na,2023-01-01T02:00:00Z,1,0\n");
    CHECK_THROWS_WITH_AS(load_profiles_csv(bad), doctest::Contains("gap"), CsvRowError);
    write(bad, "a,2023-01-01T00:00:00Z,1,0\na,2023-01-01T00:30:00Z,1,0\n");
    CHECK_THROWS_AS(load_profiles_csv(bad), CsvRowError);
    write(bad, "a,2023-01-01T00:00:00Z,abc,0\n");
    CHECK_THROWS_AS(load_profiles_csv(bad), CsvRowError);
    write(bad, "a,2023-01-01T00:00:00Z,1\n");
    CHECK_THROWS_AS(load_profiles_csv(bad), CsvRowError);
    CHECK_THROWS_AS(load_profiles_csv(temp_file("missing.csv")), ProfileError);
    fs::remove(path);
    fs::remove(bad);
}
