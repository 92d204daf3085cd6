#include "p2p/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "p2p/binary_io.hpp"
#include "p2p/forecasts.hpp"
#include "p2p/ktu/checkpoint.hpp"
#include "p2p/ktu/metrics.hpp"
#include "p2p/ktu/train.hpp"
#include "p2p/training.hpp"

namespace p2p::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Component seeds are derived from the run seed so one --seed moves everything.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t component_seed, std::uint64_t tag) {
    std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (tag + 1) + component_seed;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum SeedTag : std::uint64_t { kProfiles = 1, kKtu, kLearner, kOracle, kEvaluation, kIntervals, kSearch, kEpisodes };

struct Workspace {
    std::vector<profiles::ProsumerSpec> specs;
    std::vector<profiles::EnergyProfile> profiles;
};

Workspace load_workspace(const RunConfig& cfg) {
    Workspace ws;
    ws.specs = cfg.profiles.prosumers.empty() ? profiles::default_community() : cfg.profiles.prosumers;
    if (cfg.profiles.agent_count > 0) ws.specs.resize(cfg.profiles.agent_count);

    if (cfg.profiles.csv_path.empty()) {
        profiles::GeneratorOptions opt;
        opt.latitude_deg = cfg.profiles.latitude_deg;
        opt.hours = cfg.profiles.hours;
        ws.profiles = profiles::generate_synthetic_profiles(ws.specs, derive_seed(cfg.seed, 0, kProfiles), opt);
        return ws;
    }
    const fs::path path = cfg.resolve(cfg.profiles.csv_path);
    if (!fs::exists(path)) throw InputError("profile file not found: " + path.string());
    auto all = profiles::load_profiles_csv(path);
    for (const auto& spec : ws.specs) {
        auto it = std::ranges::find_if(all, [&](const auto& p) { return p.prosumer_id == spec.id; });
        if (it == all.end()) throw InputError("profile file " + path.string() + " has no series for '" + spec.id + "'");
        profiles::EnergyProfile p = *it;
        if (p.size() > cfg.profiles.hours) {
            p.load.resize(cfg.profiles.hours);
            p.generation.resize(cfg.profiles.hours);
        }
        ws.profiles.push_back(std::move(p));
    }
    return ws;
}

fs::path output_dir(const RunConfig& cfg) {
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs) {
    json m{{"tool", kToolVersion},
           {"command", command},
           {"config_hash", config_hash(cfg)},
           {"seed", cfg.seed},
           {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
           {"json_version", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
           {"outputs", outputs},
           {"config", to_json(cfg)}};
    write_text(dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
    write_text(dir / "config.json", canonical_dump(cfg));
}

ktu::KtuConfig forecaster_config(const RunConfig& cfg) {
    ktu::KtuConfig k = cfg.forecaster.ktu;
    k.seed = derive_seed(cfg.seed, k.seed, kKtu);
    return k;
}

profiles::WindowedDataset build_dataset(const Workspace& ws, const profiles::NormStats& stats,
                                        const ktu::KtuConfig& k, double latitude) {
    profiles::WindowedDataset data;
    for (std::size_t i = 0; i < ws.specs.size(); ++i) {
        const auto features = profiles::encode_profile(ws.profiles[i], ws.specs[i], stats, latitude);
        profiles::append_dataset(data, profiles::build_windows(ws.profiles[i], features, k.window, k.horizon));
    }
    return data;
}

fs::path forecaster_checkpoint_path(const RunConfig& cfg) {
    if (!cfg.forecaster.checkpoint.empty()) return cfg.resolve(cfg.forecaster.checkpoint);
    const fs::path dir = fs::path(cfg.output_dir) / "forecaster";
    return cfg.forecaster.per_prosumer ? dir : dir / "ktu.ckpt";
}

std::string prosumer_checkpoint_name(const std::string& id) { return "ktu_" + id + ".ckpt"; }

ktu::KtuParameters load_forecaster(const fs::path& path, const ktu::KtuConfig& k) {
    if (!fs::exists(path)) throw InputError("forecaster checkpoint not found: " + path.string());
    return ktu::load_checkpoint(path, k);
}

forecasts::ForecastTable build_forecasts(const RunConfig& cfg, const Workspace& ws) {
    if (cfg.forecaster.mode == "oracle") {
        forecasts::OracleOptions o;
        o.horizon = cfg.forecaster.ktu.horizon;
        o.noise_fraction = cfg.forecaster.oracle_noise;
        o.latitude_deg = cfg.profiles.latitude_deg;
        o.seed = derive_seed(cfg.seed, 0, kOracle);
        return forecasts::oracle_forecasts(ws.profiles, o);
    }
    const fs::path path = forecaster_checkpoint_path(cfg);
    const profiles::NormStats stats = profiles::fit_norm_stats(ws.profiles);
    if (!cfg.forecaster.per_prosumer) {
        const ktu::KtuParameters params = load_forecaster(path, cfg.forecaster.ktu);
        return forecasts::ktu_forecasts(params, ws.profiles, ws.specs, stats, cfg.profiles.latitude_deg);
    }
    forecasts::ForecastTable table;
    table.horizon = cfg.forecaster.ktu.horizon;
    for (std::size_t i = 0; i < ws.specs.size(); ++i) {
        const ktu::KtuParameters params = load_forecaster(path / prosumer_checkpoint_name(ws.specs[i].id), cfg.forecaster.ktu);
        forecasts::ForecastTable one = forecasts::ktu_forecasts(params, std::span(&ws.profiles[i], 1),
                                                                std::span(&ws.specs[i], 1), stats,
                                                                cfg.profiles.latitude_deg);
        table.by_agent.push_back(std::move(one.by_agent.front()));
    }
    return table;
}

agents::StateMode variant_mode(const std::string& v) { return agents::state_mode_from_string(v); }

std::string family_label(const std::string& family) {
    if (family == "rule_based") return "Rule Based";
    if (family == "dqn") return "DQN";
    return "DQN Forecasting";
}

std::string fmt(double v, int precision = 2) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

struct TestMetrics {
    double picp = 0.0, mpiw = 0.0, crps = 0.0;
    std::size_t n = 0;
};

}  // namespace

RunConfig effective_config(const CommonOptions& options) {
    if (options.config.empty()) throw ConfigError({"--config: a configuration file is required"});
    RunConfig cfg = load_config(options.config);
    if (options.seed) cfg.seed = *options.seed;
    if (options.out) cfg.output_dir = *options.out;
    if (options.p2p) cfg.p2p_enabled = *options.p2p;
    if (options.trials) cfg.hp_search.trials = *options.trials;
    if (options.trials && *options.trials == 0) throw ConfigError({"--trials: must be positive"});
    return cfg;
}

// ---------------------------------------------------------------------------

void cmd_generate_profiles(const RunConfig& cfg) {
    const Workspace ws = load_workspace(cfg);
    const fs::path out = output_dir(cfg);
    profiles::write_profiles_csv(out / "profiles.csv", ws.profiles);
    write_manifest(out, "generate-profiles", cfg, {"profiles.csv"});
}

void cmd_train_forecaster(const RunConfig& cfg) {
    const Workspace ws = load_workspace(cfg);
    const ktu::KtuConfig k = forecaster_config(cfg);
    const profiles::NormStats stats = profiles::fit_norm_stats(ws.profiles);
    const fs::path dir = output_dir(cfg) / "forecaster";
    fs::create_directories(dir);

    // One shared model, or one per prosumer trained on its own windows.
    struct Trained {
        std::string label;
        profiles::WindowedDataset data;
        ktu::TrainingResult result;
    };
    std::vector<Trained> models;
    if (cfg.forecaster.per_prosumer) {
        for (std::size_t i = 0; i < ws.specs.size(); ++i) {
            Workspace one;
            one.specs = {ws.specs[i]};
            one.profiles = {ws.profiles[i]};
            Trained t{ws.specs[i].id, build_dataset(one, stats, k, cfg.profiles.latitude_deg), {}};
            t.result = ktu::train(t.data, k);
            models.push_back(std::move(t));
        }
    } else {
        Trained t{"", build_dataset(ws, stats, k, cfg.profiles.latitude_deg), {}};
        t.result = ktu::train(t.data, k);
        models.push_back(std::move(t));
    }

    std::vector<std::string> outputs;
    for (const Trained& m : models) {
        const std::string ckpt = m.label.empty() ? "ktu.ckpt" : prosumer_checkpoint_name(m.label);
        const std::string log = m.label.empty() ? "training_log.csv" : "training_log_" + m.label + ".csv";
        ktu::save_checkpoint(dir / ckpt, m.result.params);
        ktu::write_training_log_csv(dir / log, m.result.log);
        outputs.push_back("forecaster/" + ckpt);
        outputs.push_back("forecaster/" + log);
    }

    // Test-split calibration at the 90% level, pooled over every model.
    std::mt19937_64 rng(derive_seed(cfg.seed, 0, kIntervals));
    std::array<std::vector<double>, 2> lower, upper, truth;
    std::array<double, 2> crps{0.0, 0.0};
    for (const Trained& m : models) {
        for (const std::size_t i : m.data.test) {
            const ktu::ForwardResult r = ktu::forward(m.result.params, m.data.inputs[i], m.data.exo[i]);
            const ktu::IntervalForecast iv =
                ktu::intervals_from_distribution(r.distribution, m.data.exo[i].col(0), 200, 0.9, rng);
            for (Eigen::Index s = 0; s < r.distribution.horizon(); ++s) {
                for (int t = 0; t < 2; ++t) {
                    const double mu = t == 0 ? r.distribution.mu_load[s] : r.distribution.mu_pv[s];
                    const double var = t == 0 ? r.distribution.var_load[s] : r.distribution.var_pv[s];
                    lower[t].push_back(iv.lower(s, t));
                    upper[t].push_back(iv.upper(s, t));
                    truth[t].push_back(m.data.targets[i](s, t));
                    crps[t] += ktu::crps_gaussian(mu, std::sqrt(var), m.data.targets[i](s, t));
                }
            }
        }
    }
    std::ostringstream csv;
    csv << "target,picp,mpiw,crps,n\n" << std::setprecision(10);
    for (int t = 0; t < 2; ++t) {
        const std::size_t n = truth[t].size();
        csv << (t == 0 ? "load" : "pv") << ',';
        if (n == 0) {
            csv << "nan,nan,nan,0\n";
            continue;
        }
        csv << ktu::picp(lower[t], upper[t], truth[t]) << ',' << ktu::mpiw(lower[t], upper[t]) << ','
            << crps[t] / static_cast<double>(n) << ',' << n << '\n';
    }
    write_text(dir / "test_metrics.csv", csv.str());

    json best_epochs = json::object();
    for (const Trained& m : models) best_epochs[m.label.empty() ? "shared" : m.label] = m.result.best_epoch;
    json norm{{"load_mean", stats.load_mean}, {"load_std", stats.load_std}, {"gen_mean", stats.gen_mean},
              {"gen_std", stats.gen_std}, {"best_epoch", best_epochs}};
    write_text(dir / "norm_stats.json", norm.dump(2) + "\n");
    outputs.push_back("forecaster/test_metrics.csv");
    outputs.push_back("forecaster/norm_stats.json");
    write_manifest(output_dir(cfg), "train-forecaster", cfg, outputs);
}

void cmd_train_agents(const RunConfig& cfg) {
    const Workspace ws = load_workspace(cfg);
    const forecasts::ForecastTable table = build_forecasts(cfg, ws);
    env::Community community = env::make_community(ws.specs, ws.profiles);
    community.calendar = cfg.calendar;
    community.p2p_enabled = cfg.p2p_enabled;
    community.forecasts = &table;

    std::vector<std::string> outputs;
    for (const std::string& variant : cfg.training.variants) {
        training::AgentTrainingConfig tc;
        tc.learner = cfg.learner;
        tc.learner.state_mode = variant_mode(variant);
        tc.learner.seed = derive_seed(cfg.seed, cfg.learner.seed, kLearner);
        tc.total_steps = cfg.training.total_steps;
        tc.episode_hours = cfg.training.episode_hours;
        tc.random_start = cfg.training.random_start;
        tc.seed = derive_seed(cfg.seed, 0, kEpisodes);
        tc.eval_every = cfg.training.eval_every;
        tc.eval_hours = std::min(cfg.training.episode_hours, cfg.evaluation.episode_hours);
        tc.eval_seed = derive_seed(cfg.seed, 0, kEvaluation);
        const training::TrainedAgents trained = training::train_agents(community, tc);

        const fs::path dir = output_dir(cfg) / "agents" / variant;
        fs::create_directories(dir);
        for (std::size_t i = 0; i < community.size(); ++i) {
            const std::string id = community.agents[i].spec.id;
            agents::save_policy(dir / (id + ".dqn"), training::checkpoint_of(community, i, trained.learners[i]));
            agents::write_metrics_csv(dir / (id + "_metrics.csv"), trained.curves[i]);
            outputs.push_back("agents/" + variant + "/" + id + ".dqn");
            outputs.push_back("agents/" + variant + "/" + id + "_metrics.csv");
        }
        std::ostringstream conv;
        conv << "episode,step,mean_episode_reward\n" << std::setprecision(10);
        for (std::size_t e = 0; e < trained.community_rewards.size(); ++e)
            conv << e + 1 << ',' << trained.episode_end_steps[e] << ',' << trained.community_rewards[e] << '\n';
        write_text(dir / "convergence.csv", conv.str());
        outputs.push_back("agents/" + variant + "/convergence.csv");
        if (!trained.eval_curve.empty()) {
            std::ostringstream ev;
            ev << "step,greedy_reward\n" << std::setprecision(10);
            for (const auto& p : trained.eval_curve) ev << p.step << ',' << p.reward << '\n';
            write_text(dir / "eval_curve.csv", ev.str());
            outputs.push_back("agents/" + variant + "/eval_curve.csv");
        }
    }
    write_manifest(output_dir(cfg), "train-agents", cfg, outputs);
}

void cmd_evaluate(const RunConfig& cfg, bool single_scenario) {
    const Workspace ws = load_workspace(cfg);
    const forecasts::ForecastTable table = build_forecasts(cfg, ws);
    env::Community community = env::make_community(ws.specs, ws.profiles);
    community.calendar = cfg.calendar;
    community.forecasts = &table;

    // Load every checkpoint before simulating so missing files fail fast.
    std::map<std::string, std::vector<agents::PolicyCheckpoint>> checkpoints;
    for (const std::string& family : cfg.evaluation.policies) {
        if (family == "rule_based") continue;
        const auto it = cfg.evaluation.checkpoints.find(family);
        const fs::path dir = it != cfg.evaluation.checkpoints.end()
                                 ? cfg.resolve(it->second)
                                 : fs::path(cfg.output_dir) / "agents" / (family == "dqn" ? "forecast_free" : "full");
        for (const auto& a : community.agents) {
            const fs::path path = dir / (a.spec.id + ".dqn");
            if (!fs::exists(path)) throw InputError("missing policy checkpoint for " + family + ": " + path.string());
            checkpoints[family].push_back(agents::load_policy(path));
        }
    }

    const fs::path dir = output_dir(cfg) / "evaluation";
    fs::create_directories(dir);
    std::vector<std::string> outputs;
    std::vector<env::KpiReport> reports;
    std::vector<bool> settings = single_scenario ? std::vector<bool>{cfg.p2p_enabled} : std::vector<bool>{false, true};
    const std::uint64_t eval_seed = derive_seed(cfg.seed, 0, kEvaluation);

    std::ostringstream soc;
    soc << "policy,scenario,hour,mean_soc_kwh\n" << std::setprecision(10);
    for (const bool p2p : settings) {
        community.p2p_enabled = p2p;
        const std::string scen = p2p ? "p2p" : "no_p2p";
        for (const std::string& family : cfg.evaluation.policies) {
            auto make_policy = [&](std::uint64_t s) -> env::Policy {
                if (family == "rule_based") return training::rule_based_policy();
                return training::dqn_policy(community, checkpoints.at(family), cfg.evaluation.epsilon, s);
            };
            const auto logs = training::evaluate(community, make_policy, cfg.evaluation.episodes,
                                                 cfg.evaluation.episode_hours, eval_seed, true);
            env::KpiReport report = env::kpi_report(logs, family, p2p);
            const std::string stem = family + "_" + scen;
            write_text(dir / ("kpi_" + stem + ".json"), env::to_json(report).dump(2) + "\n");
            env::write_episode_csv(dir / ("episode_" + stem + ".csv"), logs.front());
            outputs.push_back("evaluation/kpi_" + stem + ".json");
            outputs.push_back("evaluation/episode_" + stem + ".csv");
            reports.push_back(std::move(report));

            // Daily SoC profile across agents and episodes.
            std::array<double, 24> sum{};
            std::array<std::size_t, 24> count{};
            for (const auto& log : logs) {
                for (const auto& row : log.rows) {
                    const int h = profiles::hour_of_day(community.agents.front().profile.timestamp(row.step));
                    sum[static_cast<std::size_t>(h)] += row.soc;
                    ++count[static_cast<std::size_t>(h)];
                }
            }
            for (std::size_t h = 0; h < 24; ++h)
                soc << family << ',' << scen << ',' << h << ','
                    << (count[h] > 0 ? sum[h] / static_cast<double>(count[h]) : 0.0) << '\n';
        }
    }
    write_text(dir / "soc_profile.csv", soc.str());
    outputs.push_back("evaluation/soc_profile.csv");

    std::ostringstream csv;
    csv << "policy,scenario,episodes,cost_mean,cost_std,revenue_mean,revenue_std,peak_mean,peak_std,reward_mean,reward_std\n"
        << std::setprecision(10);
    for (const auto& r : reports)
        csv << r.scenario << ',' << (r.p2p_enabled ? "with_p2p" : "without_p2p") << ',' << r.episodes << ','
            << r.cost_bought.mean << ',' << r.cost_bought.std << ',' << r.revenue_sold.mean << ','
            << r.revenue_sold.std << ',' << r.peak_hour_grid_demand.mean << ',' << r.peak_hour_grid_demand.std << ','
            << r.total_reward.mean << ',' << r.total_reward.std << '\n';
    write_text(dir / "comparison.csv", csv.str());
    write_text(dir / "comparison.md", comparison_table(reports));
    outputs.push_back("evaluation/comparison.csv");
    outputs.push_back("evaluation/comparison.md");
    write_manifest(output_dir(cfg), "evaluate", cfg, outputs);
}

void cmd_hyperparameter_search(const RunConfig& cfg) {
    const HpSearchSettings& hp = cfg.hp_search;
    const SearchSpace& sp = hp.space;
    if (hp.trials == 0) throw ConfigError({"hp_search.trials: must be positive"});
    if (sp.batch_size.empty() || sp.d_model.empty() || sp.n_heads.empty())
        throw ConfigError({"hp_search.space: empty search space"});

    const Workspace ws = load_workspace(cfg);
    const profiles::NormStats stats = profiles::fit_norm_stats(ws.profiles);
    const ktu::KtuConfig base = forecaster_config(cfg);
    const profiles::WindowedDataset data = build_dataset(ws, stats, base, cfg.profiles.latitude_deg);

    std::mt19937_64 rng(derive_seed(cfg.seed, 0, kSearch));
    auto uniform = [&rng](const Range& r) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double x = u(rng);
        return r.lo + x * (r.hi - r.lo);
    };
    auto log_uniform = [&rng](const Range& r) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double x = u(rng);
        return std::exp(std::log(r.lo) + x * (std::log(r.hi) - std::log(r.lo)));
    };
    auto choice = [&rng](const std::vector<std::size_t>& xs) {
        std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
        return xs[pick(rng)];
    };

    struct Trial {
        std::size_t id;
        ktu::KtuConfig cfg;
        double val_total;
        std::size_t best_epoch;
    };
    std::vector<Trial> trials;
    for (std::size_t t = 0; t < hp.trials; ++t) {
        ktu::KtuConfig k = base;
        k.learning_rate = log_uniform(sp.learning_rate);
        k.batch_size = choice(sp.batch_size);
        k.d_model = choice(sp.d_model);
        k.n_heads = choice(sp.n_heads);
        k.dropout = uniform(sp.dropout);
        k.alpha_smooth = uniform(sp.alpha_smooth);
        k.beta_night = uniform(sp.beta_night);
        k.max_epochs = hp.max_epochs;
        const ktu::TrainingResult r = ktu::train(data, k);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : r.log) best = std::min(best, e.total);
        trials.push_back({t + 1, k, best, r.best_epoch});
    }
    std::vector<Trial> ranked = trials;
    std::stable_sort(ranked.begin(), ranked.end(), [](const Trial& a, const Trial& b) { return a.val_total < b.val_total; });

    const fs::path dir = output_dir(cfg) / "hp_search";
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "rank,trial,learning_rate,batch_size,d_model,n_heads,dropout,alpha_smooth,beta_night,val_total,best_epoch\n"
        << std::setprecision(10);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const Trial& t = ranked[i];
        csv << i + 1 << ',' << t.id << ',' << t.cfg.learning_rate << ',' << t.cfg.batch_size << ',' << t.cfg.d_model
            << ',' << t.cfg.n_heads << ',' << t.cfg.dropout << ',' << t.cfg.alpha_smooth << ',' << t.cfg.beta_night
            << ',' << t.val_total << ',' << t.best_epoch << '\n';
    }
    write_text(dir / "trials.csv", csv.str());
    json best{{"trial", ranked.front().id}, {"val_total", ranked.front().val_total}, {"ktu", json(ranked.front().cfg)}};
    write_text(dir / "best_config.json", best.dump(2) + "\n");
    write_manifest(output_dir(cfg), "hp-search", cfg, {"hp_search/trials.csv", "hp_search/best_config.json"});
}

// ---------------------------------------------------------------------------

std::string percent_diff(double a, double b) {
    if (!(std::abs(a) > 1e-12)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * (b - a) / a);
    return buf;
}

std::string comparison_table(const std::vector<env::KpiReport>& reports) {
    std::vector<std::string> families;
    std::map<std::pair<std::string, bool>, const env::KpiReport*> cell;
    bool has[2] = {false, false};
    for (const auto& r : reports) {
        if (std::ranges::find(families, r.scenario) == families.end()) families.push_back(r.scenario);
        cell[{r.scenario, r.p2p_enabled}] = &r;
        has[r.p2p_enabled ? 1 : 0] = true;
    }
    const bool diff_col = cell.contains({"dqn", false}) || cell.contains({"dqn", true});

    std::ostringstream out;
    out << "| Metric | Scenario |";
    for (const auto& f : families) out << ' ' << family_label(f) << " |";
    if (diff_col) out << " % Diff (DQN vs DQN Forecasting) |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < families.size(); ++i) out << "---|";
    if (diff_col) out << "---|";
    out << '\n';

    struct Metric {
        const char* name;
        double (*get)(const env::KpiReport&);
    };
    const Metric metrics[] = {
        {"Electricity Cost (Bought) (EUR)", [](const env::KpiReport& r) { return r.cost_bought.mean; }},
        {"Electricity Revenue (Sold) (EUR)", [](const env::KpiReport& r) { return r.revenue_sold.mean; }},
        {"Peak Hour Demand (kWh)", [](const env::KpiReport& r) { return r.peak_hour_grid_demand.mean; }},
    };
    for (const Metric& m : metrics) {
        for (const bool p2p : {false, true}) {
            if (!has[p2p ? 1 : 0]) continue;
            out << "| " << m.name << " | " << (p2p ? "with P2P" : "w/o P2P") << " |";
            for (const auto& f : families) {
                const auto it = cell.find({f, p2p});
                out << ' ' << (it != cell.end() ? fmt(m.get(*it->second)) : "") << " |";
            }
            if (diff_col) {
                const auto a = cell.find({"dqn", p2p});
                const auto b = cell.find({"dqn_forecasting", p2p});
                out << ' '
                    << (a != cell.end() && b != cell.end() ? percent_diff(m.get(*a->second), m.get(*b->second)) : "")
                    << " |";
            }
            out << '\n';
        }
        if (has[0] && has[1]) {
            out << "| " << m.name << " | P2P vs w/o P2P (%) |";
            for (const auto& f : families) {
                const auto a = cell.find({f, false});
                const auto b = cell.find({f, true});
                out << ' '
                    << (a != cell.end() && b != cell.end() ? percent_diff(m.get(*a->second), m.get(*b->second)) : "")
                    << " |";
            }
            if (diff_col) out << "  |";
            out << '\n';
        }
    }
    return out.str();
}

int run(const std::string& command, const CommonOptions& options) {
    try {
        const RunConfig cfg = effective_config(options);
        if (command == "generate-profiles") cmd_generate_profiles(cfg);
        else if (command == "train-forecaster") cmd_train_forecaster(cfg);
        else if (command == "train-agents") cmd_train_agents(cfg);
        else if (command == "evaluate") cmd_evaluate(cfg, options.p2p.has_value());
        else if (command == "hp-search") cmd_hyperparameter_search(cfg);
        else {
            std::cerr << "error: unknown command '" << command << "'\n";
            return kExitValidation;
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const profiles::ProfileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace p2p::cli
